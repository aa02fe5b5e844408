"""Step detection on the inter-ankle distance signal.

During double support the ankles are maximally separated, so foot contacts
show up as local maxima of the 3D distance between the two ankles.  Raw
per-sample extrema are unreliable: noiseless double support produces runs of
equal samples, and noise splits one contact into several micro-peaks.  The
detector therefore works in stages:

1. candidate extrema of both kinds, where a maximal run of equal values
   strictly above (below) both neighbours counts once, represented by its
   middle sample; a topographic prominence floor drops shallow wiggles, and
   an optional same-kind minimum separation keeps only the most prominent
   of near-coincident candidates;
2. clustering: same-kind candidates close in time and in value merge into
   one cluster represented by the best-valued member;
3. kind alternation: a valid gait signal alternates maxima and minima, so
   where two same-kind clusters end up adjacent the less prominent one is
   dropped (prefer missing a step over inventing one).

Each surviving maximum cluster becomes one StepEvent; the landing foot is
the ankle further along the walking direction, and the step length is the
inter-ankle separation projected onto that direction.  The walking direction
is the principal axis of the pelvis trajectory in 3D, signed by net
displacement, which keeps every output invariant under rigid motions of the
scene and under time reversal.
"""

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import (
    AmbiguousWalkingDirection,
    MissingJoint,
    MissingModality,
    NoStepsDetected,
    SignalTooShort,
)
from .optimizer import OptimizedSequence
from .skeleton import JointId, SkeletonFrame3D, SkeletonSequence


@dataclass(frozen=True)
class DetectorConfig:
    min_prominence_m: float = 0.05
    min_separation_s: float = 0.2
    cluster_window_s: float = 0.15
    value_tolerance_m: float = 0.02
    min_travel_m: float = 0.5

    def __post_init__(self) -> None:
        for name in ("min_prominence_m", "min_separation_s",
                     "cluster_window_s", "value_tolerance_m", "min_travel_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True, eq=False)
class StepSignal:
    """Scalar joint-to-reference distance sampled at the sequence frames."""

    times: np.ndarray
    values: np.ndarray
    joint: JointId = JointId.LEFT_ANKLE
    reference: JointId = JointId.RIGHT_ANKLE

    def __post_init__(self) -> None:
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be equal-length 1D arrays")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("signal values must be finite and non-negative")

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class ExtremumCandidate:
    index: int
    kind: str          # "max" or "min"
    value: float
    prominence: float


@dataclass(frozen=True)
class ExtremaCluster:
    kind: str                    # "max" or "min"
    members: tuple[int, ...]     # contiguous frame span covering the cluster
    index: int                   # representative: best-valued member
    value: float                 # signal value at the representative
    time_s: float
    prominence: float

    def __post_init__(self) -> None:
        if self.members != tuple(range(self.members[0], self.members[-1] + 1)):
            raise ValueError("cluster members must be contiguous")
        if self.index not in self.members:
            raise ValueError("representative must be a member")


@dataclass(frozen=True)
class StepEvent:
    foot: str             # "left" or "right": the foot that just landed
    time_s: float
    index: int            # event frame
    step_length_m: float  # ankle separation along the walking direction
    cluster: ExtremaCluster


@dataclass(frozen=True)
class StepDetection:
    events: tuple[StepEvent, ...]
    walking_direction: tuple[float, float, float]
    travel_m: float
    clusters: tuple[ExtremaCluster, ...] = field(repr=False)
    signal: StepSignal = field(repr=False)
    root_along: np.ndarray = field(repr=False)  # pelvis projected onto direction


FrameSource = Union[SkeletonSequence, OptimizedSequence, Sequence[SkeletonFrame3D]]


def _frames_3d(source: FrameSource) -> Sequence[SkeletonFrame3D]:
    if isinstance(source, SkeletonSequence):
        if source.frames_3d is None:
            raise MissingModality("step detection needs the 3D stream")
        return source.frames_3d
    if isinstance(source, OptimizedSequence):
        return source.frames
    return tuple(source)


def _joint_track(frames: Sequence[SkeletonFrame3D], joint: JointId) -> np.ndarray:
    out = np.empty((len(frames), 3))
    for i, fr in enumerate(frames):
        p = fr.joints.get(joint)
        if p is None:
            raise MissingJoint(f"{joint.label} absent in frame {fr.index}")
        out[i] = (p.x, p.y, p.z)
    return out


def build_signal(
    source: FrameSource,
    joint: JointId = JointId.LEFT_ANKLE,
    reference: JointId = JointId.RIGHT_ANKLE,
) -> StepSignal:
    """Distance between two joints over time (default: the two ankles)."""
    frames = _frames_3d(source)
    if len(frames) < 3:
        raise SignalTooShort(f"need at least 3 frames, got {len(frames)}")
    a = _joint_track(frames, joint)
    b = _joint_track(frames, reference)
    times = np.array([fr.time_s for fr in frames])
    values = np.linalg.norm(a - b, axis=1)
    return StepSignal(times=times, values=values, joint=joint, reference=reference)


def topographic_prominence(values: np.ndarray, index: int, kind: str = "max") -> float:
    """Height of an extremum over its key saddle.

    For a maximum: walk outward on each side until a strictly higher sample
    (or the signal boundary), tracking the lowest sample seen; the prominence
    is the peak value minus the higher of the two side minima.  Minima mirror
    this with the roles of high and low swapped.
    """
    v = np.asarray(values, dtype=float)
    sign = 1.0 if kind == "max" else -1.0
    s = sign * v
    peak = s[index]
    saddles = []
    for step in (-1, 1):
        lowest = peak
        i = index + step
        while 0 <= i < s.size and s[i] <= peak:
            lowest = min(lowest, s[i])
            i += step
        saddles.append(lowest)
    return float(peak - max(saddles))


def _scan_one_kind(v: np.ndarray, kind: str) -> list[int]:
    """Interior extrema, plateau-aware: a maximal run of equal values strictly
    above (below) both neighbours yields one index at the middle of the run.
    On tie-free data this is the classic three-point scan."""
    sign = 1.0 if kind == "max" else -1.0
    out: list[int] = []
    n = v.size
    i = 1
    while i < n - 1:
        j = i
        while j + 1 < n and v[j + 1] == v[i]:
            j += 1
        if j + 1 < n and sign * v[i] > sign * v[i - 1] and sign * v[i] > sign * v[j + 1]:
            out.append((i + j) // 2)
        i = j + 1
    return out


def find_extrema_candidates(
    signal: StepSignal,
    min_prominence: float = 0.0,
    min_separation: float = 0.0,
) -> list[ExtremumCandidate]:
    """Candidate maxima and minima with at least the requested prominence.

    With min_separation > 0, same-kind candidates closer than that in time
    are thinned to the most prominent one.  Alternation between kinds is not
    enforced here.
    """
    if len(signal) < 3:
        raise SignalTooShort(f"need at least 3 samples, got {len(signal)}")
    v = np.asarray(signal.values, dtype=float)
    t = signal.times

    cands: list[ExtremumCandidate] = []
    for kind in ("max", "min"):
        idxs = _scan_one_kind(v, kind)
        for i in idxs:
            p = topographic_prominence(v, i, kind)
            if p >= min_prominence:
                cands.append(ExtremumCandidate(index=i, kind=kind,
                                               value=float(v[i]), prominence=p))

    if min_separation > 0:
        kept: list[ExtremumCandidate] = []
        for c in sorted(cands, key=lambda c: (-c.prominence, c.index)):
            if all(
                c.kind != k.kind or abs(t[c.index] - t[k.index]) >= min_separation
                for k in kept
            ):
                kept.append(c)
        cands = kept

    cands.sort(key=lambda c: c.index)
    return cands


def _chain_groups(
    cands: list[ExtremumCandidate], times: np.ndarray, window: float
) -> list[list[ExtremumCandidate]]:
    groups = [[cands[0]]]
    for c in cands[1:]:
        if times[c.index] - times[groups[-1][-1].index] <= window:
            groups[-1].append(c)
        else:
            groups.append([c])
    return groups


def _split_by_value(
    group: list[ExtremumCandidate], sign: float, times: np.ndarray,
    tol: float, window: float,
) -> list[list[ExtremumCandidate]]:
    best = max(sign * c.value for c in group)
    mine = [c for c in group if best - sign * c.value <= tol]
    rest = [c for c in group if best - sign * c.value > tol]
    clusters = [mine]
    if rest:
        for sub in _chain_groups(rest, times, window):
            clusters.extend(_split_by_value(sub, sign, times, tol, window))
    return clusters


def cluster_honest_extrema(
    candidates: Sequence[ExtremumCandidate],
    signal: StepSignal,
    cluster_window: float = 0.15,
    value_tolerance: float = 0.02,
) -> list[ExtremaCluster]:
    """Merge near-coincident same-kind candidates and enforce alternation.

    Same-kind candidates within cluster_window of each other and within
    value_tolerance of the best of their group become one cluster whose
    members span the covered frames and whose representative is the
    best-valued member.  Where the resulting list has two same-kind clusters
    in a row, the one with smaller prominence is discarded until maxima and
    minima alternate.
    """
    v = np.asarray(signal.values, dtype=float)
    t = signal.times

    clusters: list[ExtremaCluster] = []
    for kind in ("max", "min"):
        sign = 1.0 if kind == "max" else -1.0
        ksorted = sorted((c for c in candidates if c.kind == kind),
                         key=lambda c: c.index)
        if not ksorted:
            continue
        for group in _chain_groups(ksorted, t, cluster_window):
            for members in _split_by_value(group, sign, t,
                                           value_tolerance, cluster_window):
                lo = min(c.index for c in members)
                hi = max(c.index for c in members)
                best = max(sign * v[lo:hi + 1])
                # The cluster covers the whole near-extremal region, not just
                # the merged candidates: expanding over every contiguous
                # sample within tolerance of the best makes the span track
                # the full double-support interval even when smoothing has
                # tilted its flat top into a dome with one skewed peak.
                while lo > 0 and best - sign * v[lo - 1] <= value_tolerance:
                    lo -= 1
                while hi + 1 < len(v) and best - sign * v[hi + 1] <= value_tolerance:
                    hi += 1
                span = tuple(range(lo, hi + 1))
                rep = lo + int(np.argmax(sign * v[lo:hi + 1]))
                clusters.append(
                    ExtremaCluster(
                        kind=kind,
                        members=span,
                        index=rep,
                        value=float(v[rep]),
                        time_s=float(t[rep]),
                        prominence=max(c.prominence for c in members),
                    )
                )

    clusters.sort(key=lambda c: c.index)
    out: list[ExtremaCluster] = []
    for c in clusters:
        if out and out[-1].kind == c.kind:
            if c.prominence > out[-1].prominence:
                out[-1] = c
            continue
        out.append(c)
    return out


def _walking_direction(root: np.ndarray, min_travel: float) -> np.ndarray:
    disp = root[-1] - root[0]
    travel = float(np.linalg.norm(disp))
    if travel < min_travel:
        raise AmbiguousWalkingDirection(
            f"net root travel {travel:.3f} m is below {min_travel} m"
        )
    centered = root - root.mean(axis=0)
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    direction = vecs[:, -1]
    if float(direction @ disp) < 0:
        direction = -direction
    return direction


def detect_steps(
    source: FrameSource,
    config: DetectorConfig = DetectorConfig(),
) -> StepDetection:
    """Find foot contacts in a 3D joint sequence.

    Raises NoStepsDetected when fewer than two honest maxima survive, and
    AmbiguousWalkingDirection when the pelvis does not travel far enough to
    orient the walk.
    """
    frames = _frames_3d(source)
    signal = build_signal(frames)
    root = _joint_track(frames, JointId.PELVIS)
    direction = _walking_direction(root, config.min_travel_m)
    travel = float(np.linalg.norm(root[-1] - root[0]))

    candidates = find_extrema_candidates(
        signal, config.min_prominence_m, config.min_separation_s
    )
    clusters = cluster_honest_extrema(
        candidates, signal, config.cluster_window_s, config.value_tolerance_m
    )
    maxima = [c for c in clusters if c.kind == "max"]
    if len(maxima) < 2:
        raise NoStepsDetected(
            f"found {len(maxima)} foot contacts, need at least 2"
        )

    left = _joint_track(frames, JointId.LEFT_ANKLE)
    right = _joint_track(frames, JointId.RIGHT_ANKLE)
    along_gap = (left - right) @ direction

    times = signal.times
    events: list[StepEvent] = []
    for c in maxima:
        gap = float(along_gap[c.index])
        # Time the event at the centre of the near-maximal span: for a
        # double-support plateau that is the middle of the contact interval,
        # a consistent offset that cancels out of every step-time difference,
        # where the raw argmax wanders across the plateau.
        mid = 0.5 * (float(times[c.members[0]]) + float(times[c.members[-1]]))
        ev = StepEvent(
            foot="left" if gap > 0 else "right",
            time_s=mid,
            index=c.index,
            step_length_m=abs(gap),
            cluster=c,
        )
        if events and events[-1].foot == ev.foot:
            # Feet must alternate; keep the more prominent of the clash.
            if ev.cluster.prominence > events[-1].cluster.prominence:
                events[-1] = ev
            continue
        events.append(ev)
    if len(events) < 2:
        raise NoStepsDetected(
            f"only {len(events)} events left after alternation check"
        )

    return StepDetection(
        events=tuple(events),
        walking_direction=tuple(float(x) for x in direction),  # type: ignore[arg-type]
        travel_m=travel,
        clusters=tuple(clusters),
        signal=signal,
        root_along=root @ direction,
    )
