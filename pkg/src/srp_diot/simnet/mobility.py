"""Node trajectories: random waypoint in three speed classes, or a replayed trace."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ConfigError

FIXED, MEDIUM, HIGH = 0, 1, 2


def assign_classes(rng: np.random.Generator, n: int, mix: tuple[int, int, int]) -> np.ndarray:
    """Exactly round(share * n) nodes per class, shuffled; rounding slack goes to the fixed class."""
    counts = [round(n * m / 100) for m in mix[1:]]
    while sum(counts) > n:
        counts[counts.index(max(counts))] -= 1
    classes = np.array([FIXED] * (n - sum(counts)) + [MEDIUM] * counts[0] + [HIGH] * counts[1], dtype=np.int8)
    rng.shuffle(classes)
    return classes


def random_waypoint(
    rng: np.random.Generator,
    start: np.ndarray,
    classes: np.ndarray,
    side: float,
    speed_caps: tuple[float, float],
    periods: int,
) -> np.ndarray:
    """Positions of every node for periods 0..periods-1, shape (periods, n, 2).

    Mobile nodes walk straight to a uniform destination at a speed drawn from
    (0, cap] and pick a new leg on arrival, without pausing.  Per period the
    draws are: destinations for arrivals, then their speeds, in node order.
    """
    n = len(start)
    cap = np.zeros(n)
    cap[classes == MEDIUM] = speed_caps[0]
    cap[classes == HIGH] = speed_caps[1]
    mobile = cap > 0
    out = np.empty((periods, n, 2))
    pos = start.astype(float).copy()
    dest = pos.copy()
    speed = np.zeros(n)

    def new_legs(mask: np.ndarray) -> None:
        k = int(mask.sum())
        if k:
            dest[mask] = rng.uniform(0.0, side, (k, 2))
            speed[mask] = cap[mask] * (1.0 - rng.random(k))

    new_legs(mobile)
    for t in range(periods):
        out[t] = pos
        delta = dest - pos
        dist = np.hypot(delta[:, 0], delta[:, 1])
        arrive = mobile & (dist <= speed)
        going = mobile & ~arrive
        pos[going] += delta[going] * (speed[going] / dist[going])[:, None]
        pos[arrive] = dest[arrive]
        new_legs(arrive)
    return out


def read_trace(path: str | Path, n: int, periods: int) -> np.ndarray:
    """Load ``node period x y`` rows; a node holds its last known position between rows.

    Every node needs a row at period 0.
    """
    known: dict[int, dict[int, tuple[float, float]]] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            node, t, x, y = int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
        except (ValueError, IndexError):
            raise ConfigError(f"trace line {lineno}: expected 'node period x y'") from None
        if len(parts) != 4 or not 0 <= node < n or t < 0:
            raise ConfigError(f"trace line {lineno}: bad row {line!r}")
        known.setdefault(node, {})[t] = (x, y)
    out = np.empty((periods, n, 2))
    for node in range(n):
        rows = known.get(node, {})
        if 0 not in rows:
            raise ConfigError(f"trace has no period-0 position for node {node}")
        cur = rows[0]
        for t in range(periods):
            cur = rows.get(t, cur)
            out[t, node] = cur
    return out


def write_trace(positions: np.ndarray, path: str | Path) -> None:
    """Write rows only where a node moved, so a replay reproduces ``positions`` exactly."""
    lines = []
    periods, n, _ = positions.shape
    for node in range(n):
        last = None
        for t in range(periods):
            x, y = positions[t, node].tolist()
            if last is None or (x, y) != last:
                lines.append(f"{node} {t} {x!r} {y!r}")
                last = (x, y)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
