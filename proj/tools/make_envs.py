#!/usr/bin/env python3
"""Writes the bundled environment files under data/envs/.

Layouts are hand-authored. Run from the repository root:
    python3 tools/make_envs.py [--check]
"""
import json
import math
import pathlib
import sys

ROOM = 50.0
OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "envs"


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def ngon(cx, cy, r, n, phase=0.0):
    return [[round(cx + r * math.cos(phase + 2 * math.pi * k / n), 6),
             round(cy + r * math.sin(phase + 2 * math.pi * k / n), 6)] for k in range(n)]


def box(*a):
    return {"parts": [rect(*a)]}


def shape(poly):
    return {"parts": [poly]}


def u_wall(x0, y0, width, depth, t, opening):
    """U made of three rectangles; `opening` is the open side."""
    x1, y1 = x0 + width, y0 + depth
    if opening == "up":
        return {"parts": [rect(x0, y0, x1, y0 + t), rect(x0, y0 + t, x0 + t, y1), rect(x1 - t, y0 + t, x1, y1)]}
    if opening == "down":
        return {"parts": [rect(x0, y1 - t, x1, y1), rect(x0, y0, x0 + t, y1 - t), rect(x1 - t, y0, x1, y1 - t)]}
    if opening == "left":
        return {"parts": [rect(x1 - t, y0, x1, y1), rect(x0, y0, x1 - t, y0 + t), rect(x0, y1 - t, x1 - t, y1)]}
    if opening == "right":
        return {"parts": [rect(x0, y0, x0 + t, y1), rect(x0 + t, y0, x1, y0 + t), rect(x0 + t, y1 - t, x1, y1)]}
    raise ValueError(opening)


FULL = [{"min": [1.0, 1.0], "max": [49.0, 49.0]}]

ENVS = {
    "baseEnv": [
        box(14, 23, 18, 27),
        box(32, 23, 36, 27),
    ],
    "intEnv": [
        u_wall(18, 18, 14, 14, 1, "up"),
        box(40, 40, 43, 43),
        box(6, 8, 9, 11),
    ],
    "finalEnv": [
        box(4, 36, 24, 37),
        box(4, 40, 24, 41),
        u_wall(22, 14, 12, 12, 1, "up"),
        u_wall(34, 30, 11, 12, 1, "left"),
        box(8, 10, 11, 13),
        shape([[8, 24], [13, 24], [10.5, 28]]),
        box(38, 6, 40, 8),
        box(30, 45, 32, 47),
    ],
    "testEnv1": [
        u_wall(10, 10, 10, 10, 1, "right"),
        box(30, 30, 34, 34),
        shape(ngon(38, 14, 2.5, 6)),
        box(14, 38, 22, 39),
    ],
    "testEnv2": [
        box(6, 30, 26, 31),
        box(6, 34, 26, 35),
        u_wall(30, 10, 12, 10, 1, "down"),
        shape([[12, 12], [18, 12], [15, 17]]),
        box(38, 38, 42, 42),
        shape(ngon(40, 28, 2.0, 5)),
    ],
    "testEnv3": [
        u_wall(8, 8, 12, 12, 1, "up"),
        u_wall(30, 30, 12, 12, 1, "left"),
        box(24, 4, 25, 22),
        box(8, 40, 22, 41),
        box(8, 44, 22, 45),
        shape(ngon(38, 14, 3.0, 8)),
        box(27, 44, 30, 47),
    ],
    "testEnv4": [
        box(4, 24, 20, 25),
        box(4, 27.5, 20, 28.5),
        u_wall(26, 6, 14, 14, 1, "up"),
        u_wall(28, 32, 14, 12, 1, "down"),
        shape([[6, 6], [14, 6], [10, 13]]),
        box(44, 20, 47, 30),
        shape(ngon(12, 42, 3.0, 6)),
        box(21, 38, 24, 41),
    ],
    "testEnv5": [
        box(4, 20, 22, 21),
        box(4, 23.5, 22, 24.5),
        box(28, 26, 29, 46),
        box(32, 26, 33, 46),
        u_wall(8, 32, 12, 12, 1.5, "right"),
        u_wall(32, 6, 12, 12, 1.5, "left"),
        shape(ngon(14, 9, 3.5, 6)),
        box(40, 30, 45, 35),
        shape([[38, 40], [46, 40], [42, 46]]),
        box(24, 10, 27, 13),
    ],
}


def environment(name, obstacles):
    return {
        "name": name,
        "geometry": {"bounds": {"min": [0.0, 0.0], "max": [ROOM, ROOM]}, "obstacles": obstacles},
        "spawn_region": FULL,
        "goal_region": FULL,
    }


def free_space_connected(obstacles, radius=0.4, cell=0.25):
    """Flood fill over a grid of robot-centre positions."""
    n = int(ROOM / cell)

    def blocked(x, y):
        if x < radius or y < radius or x > ROOM - radius or y > ROOM - radius:
            return True
        for o in obstacles:
            for p in o["parts"]:
                xs = [v[0] for v in p]
                ys = [v[1] for v in p]
                if min(xs) - radius <= x <= max(xs) + radius and min(ys) - radius <= y <= max(ys) + radius:
                    return True
        return False

    free = [[not blocked((i + 0.5) * cell, (j + 0.5) * cell) for j in range(n)] for i in range(n)]
    start = next((i, j) for i in range(n) for j in range(n) if free[i][j])
    seen = {start}
    stack = [start]
    while stack:
        i, j = stack.pop()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < n and 0 <= b < n and free[a][b] and (a, b) not in seen:
                seen.add((a, b))
                stack.append((a, b))
    total = sum(map(sum, free))
    return len(seen), total


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, obstacles in ENVS.items():
        if "--check" in sys.argv:
            reached, total = free_space_connected(obstacles)
            print(f"{name}: free cells reachable {reached}/{total}")
        (OUT / f"{name}.json").write_text(json.dumps(environment(name, obstacles), indent=2) + "\n")


if __name__ == "__main__":
    main()
