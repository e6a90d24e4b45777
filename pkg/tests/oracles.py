"""Slow loop-based reference implementations shared by unit and acceptance tests."""

import math

import numpy as np

from dwarl.dynamics import VelocityPair, feasible_window, rollout_arc


def arc_distance(pose, v, w, points, duration, samples=10):
    """Nearest point distance along one arc, one sample and one point at a time."""
    best = math.inf
    for p in rollout_arc(pose, VelocityPair(v, w), duration, samples):
        for q in points:
            best = min(best, math.hypot(p.x - q[0], p.y - q[1]))
    return best


def brute_force_dwa(pose, current, points, goal, limits, cfg):
    """Loop-by-loop argmax of the weighted objective over admissible pairs."""
    win = feasible_window(current, limits)
    lin = np.linspace(win.lin[0], win.lin[1], cfg.k)
    ang = np.linspace(win.ang[0], win.ang[1], cfg.k)
    best, best_key = None, None
    for v in lin:
        for w in ang:
            arc = rollout_arc(pose, VelocityPair(v, w), cfg.horizon, cfg.arc_samples)
            dist = min((math.hypot(p.x - q[0], p.y - q[1]) for p in arc for q in points), default=math.inf)
            free = max(dist - limits.radius, 0.0)
            if not (math.isinf(free) or (v <= math.sqrt(2 * free * limits.v_acc)
                                          and abs(w) <= math.sqrt(2 * free * limits.w_acc))):
                continue
            end = arc[-1]
            err = abs(math.remainder(math.atan2(goal[1] - end.y, goal[0] - end.x) - end.theta, 2 * math.pi))
            score = (cfg.alpha * (1 - err / math.pi) + cfg.beta * min(free, cfg.dist_cap) / cfg.dist_cap
                     + cfg.gamma * v / limits.v_max)
            key = (score, -abs(w))
            if best_key is None or score > best_key[0] + 1e-12 or (
                    abs(score - best_key[0]) <= 1e-12 and abs(w) < -best_key[1]):
                best, best_key = (v, w), key
    return best
