"""Frame-to-frame droplet identity and the three behaviour fitness scores.

Tracking is nearest-neighbour within a 30 px gate: for each detection, the
candidates are the not-yet-claimed droplets of the previous frame whose centre
lies within the gate; the nearest candidate keeps its identity, otherwise a
new identity is created. No motion model is used.

Movement and directionality average per frame pair (respectively frame
triple) over the droplets contributing to that pair/triple, then over time,
so the scores stay well defined when the droplet count varies. The constant-M
1/(MN) normalization is also computed and reported alongside.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .arena import DetectionFrame

TRACK_RADIUS_PX = 30.0
DIVISION_AREA_THRESHOLD = 15.0


class TrackingError(ValueError):
    pass


class EmptyExperiment(TrackingError):
    pass


class NoFramePairs(TrackingError):
    pass


class NoTriples(TrackingError):
    pass


@dataclass
class Trajectory:
    droplet_id: int
    samples: list  # of (frame, x, y, area), frames contiguous

    @property
    def first_frame(self) -> int:
        return self.samples[0][0]

    @property
    def last_frame(self) -> int:
        return self.samples[-1][0]


@dataclass
class TrajectorySet:
    trajectories: list[Trajectory]
    total_frames: int

    @property
    def droplet_count(self) -> int:
        return len(self.trajectories)


def track(frames: list[DetectionFrame], radius: float = TRACK_RADIUS_PX) -> TrajectorySet:
    """Greedy nearest-neighbour association, detections processed in input
    order; distance ties break toward the lower previous-frame droplet id."""
    trajectories: list[Trajectory] = []
    prev: list[tuple[int, float, float]] = []  # (traj_index, x, y) of previous frame
    r2 = radius * radius
    for fr in frames:
        claimed = set()
        current = []
        for x, y, area in fr.detections:
            best = None
            best_d2 = None
            for idx, px, py in prev:
                if idx in claimed:
                    continue
                dx, dy = x - px, y - py
                d2 = dx * dx + dy * dy
                if d2 > r2:
                    continue
                if best is None or d2 < best_d2 or (
                        d2 == best_d2
                        and trajectories[idx].droplet_id < trajectories[best].droplet_id):
                    best, best_d2 = idx, d2
            if best is None:
                best = len(trajectories)
                trajectories.append(Trajectory(droplet_id=best, samples=[]))
            else:
                claimed.add(best)
            trajectories[best].samples.append((fr.frame_index, x, y, area))
            current.append((best, x, y))
        prev = current
    return TrajectorySet(trajectories=trajectories, total_frames=len(frames))


def fitness_division(ts: TrajectorySet, area_threshold: float = DIVISION_AREA_THRESHOLD) -> float:
    """Droplets alive in the final frame with area strictly above threshold."""
    if ts.total_frames == 0:
        raise EmptyExperiment("no frames")
    last = ts.total_frames - 1
    return float(sum(
        1 for tr in ts.trajectories
        if tr.last_frame == last and tr.samples[-1][3] > area_threshold))


def _per_pair_displacements(ts: TrajectorySet):
    """For every frame pair (t-1, t): list of matched-droplet displacements."""
    pairs: dict[int, list[float]] = {}
    for tr in ts.trajectories:
        s = tr.samples
        for k in range(1, len(s)):
            t, x1, y1 = s[k][0], s[k][1], s[k][2]
            x0, y0 = s[k - 1][1], s[k - 1][2]
            pairs.setdefault(t, []).append(math.hypot(x1 - x0, y1 - y0))
    return pairs


def fitness_movement(ts: TrajectorySet) -> float:
    """Mean over frame pairs of the mean per-droplet displacement (px)."""
    if ts.total_frames < 2:
        raise NoFramePairs("need at least 2 frames")
    pairs = _per_pair_displacements(ts)
    if not pairs:
        return 0.0
    return float(np.mean([np.mean(d) for d in pairs.values()]))


def movement_mn(ts: TrajectorySet) -> float:
    """The constant-M convention: total displacement / (M * N)."""
    if ts.total_frames < 2:
        raise NoFramePairs("need at least 2 frames")
    if ts.droplet_count == 0:
        return 0.0
    total = sum(d for ds in _per_pair_displacements(ts).values() for d in ds)
    return float(total / (ts.droplet_count * ts.total_frames))


def turn_angle(v, w) -> float | None:
    """Angle in [0, pi] between consecutive displacement vectors; None when
    either vector is zero length."""
    nv = math.hypot(*v)
    nw = math.hypot(*w)
    if nv == 0.0 or nw == 0.0:
        return None
    c = (v[0] * w[0] + v[1] * w[1]) / (nv * nw)
    return math.acos(max(-1.0, min(1.0, c)))


def _per_triple_angles(ts: TrajectorySet):
    triples: dict[int, list[float]] = {}
    for tr in ts.trajectories:
        s = tr.samples
        for k in range(2, len(s)):
            a, b, c = s[k - 2], s[k - 1], s[k]
            alpha = turn_angle((b[1] - a[1], b[2] - a[2]), (c[1] - b[1], c[2] - b[2]))
            if alpha is not None:
                triples.setdefault(b[0], []).append(alpha)
    return triples


def fitness_directionality(ts: TrajectorySet) -> float:
    """Mean over frame triples of the mean per-droplet turning angle (rad)."""
    if not any(len(tr.samples) >= 3 for tr in ts.trajectories):
        raise NoTriples("no droplet has 3 consecutive samples")
    triples = _per_triple_angles(ts)
    if not triples:
        return 0.0
    return float(np.mean([np.mean(a) for a in triples.values()]))


def directionality_mn(ts: TrajectorySet) -> float:
    """The constant-M convention: total turning angle / (M * N)."""
    if ts.droplet_count == 0:
        return 0.0
    total = sum(a for angles in _per_triple_angles(ts).values() for a in angles)
    return float(total / (ts.droplet_count * ts.total_frames))


FITNESS_FUNCTIONS = {
    "division": fitness_division,
    "movement": fitness_movement,
    "directionality": fitness_directionality,
}


def fitness_record(ts: TrajectorySet) -> dict:
    """All behaviour scores for one experiment, both conventions."""
    return {
        "division": fitness_division(ts),
        "movement": fitness_movement(ts),
        "directionality": (fitness_directionality(ts)
                           if any(len(t.samples) >= 3 for t in ts.trajectories) else 0.0),
        "movement_mn": movement_mn(ts),
        "directionality_mn": directionality_mn(ts),
    }


def trajectories_to_csv(ts: TrajectorySet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["droplet_id", "frame", "x", "y", "area"])
    for tr in ts.trajectories:
        for t, x, y, area in tr.samples:
            w.writerow([tr.droplet_id, t, repr(x), repr(y), repr(area)])
    return buf.getvalue()
