#!/usr/bin/env python3
"""Regenerates the bundled worlds and their demo routes.

    python3 tools/make_worlds.py [outdir]

Writes <name>.world (header line + symbol rows, first row = max y) and
<name>.demo.json (start pose, demonstration waypoints, and for woodland an
ordered list of goals that each sit behind a tree cluster).
"""
import json
import math
import random
import sys
from pathlib import Path

CELL = 0.25


def seg_dist(p, a, b):
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def poly_dist(p, pts):
    return min(seg_dist(p, pts[i], pts[i + 1]) for i in range(len(pts) - 1))


class Grid:
    def __init__(self, size_m, fill):
        self.n = int(round(size_m / CELL))
        self.cells = [[fill] * self.n for _ in range(self.n)]  # [j][i]

    def paint(self, sym, pred):
        for j in range(self.n):
            for i in range(self.n):
                c = ((i + 0.5) * CELL, (j + 0.5) * CELL)
                if pred(c):
                    self.cells[j][i] = sym

    def rows(self):
        return ["".join(self.cells[j]) for j in range(self.n - 1, -1, -1)]


def place_trees(rng, size, count, radius, avoid, keep_out, gap, margin=2.0):
    trees = []
    for _ in range(20000):
        if len(trees) == count:
            break
        r = rng.uniform(*radius)
        c = (rng.uniform(margin + r, size - margin - r), rng.uniform(margin + r, size - margin - r))
        if any(poly_dist(c, line) < r + keep_out for line in avoid):
            continue
        if any(math.hypot(c[0] - t[0], c[1] - t[1]) < r + t[2] + gap for t in trees):
            continue
        trees.append((c[0], c[1], r))
    return trees


def in_tree(p, trees, pad=0.0):
    return any(math.hypot(p[0] - x, p[1] - y) <= r + pad for x, y, r in trees)


def write(outdir, name, header, grid, demo):
    header = dict(header, width=grid.n, height=grid.n, cell_size=CELL)
    text = json.dumps(header, separators=(",", ":")) + "\n" + "\n".join(grid.rows()) + "\n"
    (outdir / f"{name}.world").write_text(text)
    (outdir / f"{name}.demo.json").write_text(json.dumps(demo, indent=2) + "\n")


def park(outdir):
    rng = random.Random(7)
    size = 30.0
    g = Grid(size, "g")
    loop = [(6, 6), (24, 6), (24, 24), (6, 24), (6, 6)]
    cross = [(6, 15), (24, 15)]
    g.paint("#", lambda c: poly_dist(c, loop) <= 1.0 or poly_dist(c, cross) <= 1.0)
    # leaves the path early so both traversable terrains are demonstrated
    route = [(6, 6), (11, 6), (12, 9), (17, 10), (22, 7), (24, 9), (24, 14), (20, 15), (15, 15), (15, 20), (10, 21),
             (7, 18), (10, 12)]
    trees = place_trees(rng, size, 14, (0.9, 1.6), [route, loop, cross], 1.6, 2.5)
    g.paint("T", lambda c: in_tree(c, trees))
    header = {
        "terrain_defs": [
            {"name": "grass", "symbol": "g", "traction": 0.85, "feature_noise_std": 0.1, "color": [86, 160, 64]},
            {"name": "path", "symbol": "#", "traction": 1.0, "feature_noise_std": 0.1, "color": [196, 180, 140]},
            {"name": "trees", "symbol": "T", "traction": 0.0, "feature_noise_std": 0.1, "color": [30, 70, 30]},
        ]
    }
    demo = {"start": {"x": 6.0, "y": 6.0, "theta": 0.0}, "waypoints": route,
            "trees": [list(t) for t in trees]}
    write(outdir, "park", header, g, demo)


def woodland(outdir):
    rng = random.Random(11)
    size = 40.0
    g = Grid(size, "h")
    trail = [(5, 8), (14, 10), (20, 16), (22, 24), (30, 28), (35, 34)]
    g.paint("d", lambda c: poly_dist(c, trail) <= 1.0)
    route = [(5, 8), (13, 10), (19, 15), (17, 19), (12, 18), (11, 14), (16, 13), (21, 19), (22, 24)]
    trees = place_trees(rng, size, 22, (0.8, 1.4), [route, trail], 1.8, 3.2)
    g.paint("T", lambda c: in_tree(c, trees))

    # goals: each lies on the far side of a cluster as seen from the previous goal
    def behind(p, k):
        x, y, r = trees[k]
        d = math.hypot(x - p[0], y - p[1])
        if not 3.0 <= d <= 11.0:
            return None
        ux, uy = (x - p[0]) / d, (y - p[1]) / d
        goal = (x + ux * (r + 1.5), y + uy * (r + 1.5))
        if not (2.0 <= goal[0] <= size - 2.0 and 2.0 <= goal[1] <= size - 2.0):
            return None
        if in_tree(goal, trees, pad=1.2):
            return None
        return goal

    def search(p, used, goals):
        if len(goals) == 8:
            return goals
        options = []
        for k in range(len(trees)):
            if k not in used and (goal := behind(p, k)) is not None:
                options.append((math.hypot(trees[k][0] - p[0], trees[k][1] - p[1]), k, goal))
        for _, k, goal in sorted(options):
            found = search(goal, used | {k}, goals + [goal])
            if found:
                return found
        return None

    goals = search(route[-1], frozenset(), [])
    if goals is None:
        raise SystemExit("woodland: no sequence of 8 goals behind clusters; adjust the seed")
    goals = [[round(x, 3), round(y, 3)] for x, y in goals]

    header = {
        "terrain_defs": [
            {"name": "dirt", "symbol": "d", "traction": 1.0, "feature_noise_std": 0.1, "color": [120, 90, 60]},
            {"name": "high_grass", "symbol": "h", "traction": 0.6, "feature_noise_std": 0.1,
             "color": [150, 170, 80]},
            {"name": "trees", "symbol": "T", "traction": 0.0, "feature_noise_std": 0.1, "color": [25, 60, 25]},
        ]
    }
    demo = {"start": {"x": 5.0, "y": 8.0, "theta": 0.2}, "waypoints": route, "goals": goals,
            "trees": [list(t) for t in trees]}
    write(outdir, "woodland", header, g, demo)


def gap(outdir):
    # a wall of trees with one opening, for planner tests
    g = Grid(12.0, "g")
    g.paint("T", lambda c: 5.5 <= c[0] <= 6.5 and not (5.0 <= c[1] <= 7.0))
    header = {
        "terrain_defs": [
            {"name": "grass", "symbol": "g", "traction": 0.9, "color": [86, 160, 64]},
            {"name": "trees", "symbol": "T", "traction": 0.0, "color": [30, 70, 30]},
        ]
    }
    demo = {"start": {"x": 2.0, "y": 3.0, "theta": 0.0}, "goal": [10.0, 9.0]}
    write(outdir, "gap", header, g, demo)


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "worlds")
    out.mkdir(parents=True, exist_ok=True)
    park(out)
    woodland(out)
    gap(out)
