"""Aggregation of detected events into the four gait parameters."""

import numpy as np
import pytest

from stridelab import TooFewSteps, compute_report, detect_steps
from stridelab.events import ExtremaCluster, StepDetection, StepEvent, StepSignal


def _detection(event_times, step_length_m=0.65, speed=1.3, fps=30.0, duration=None):
    """Hand-built detection with a constant-velocity root track."""
    duration = duration or (event_times[-1] + 0.5)
    n = int(round(duration * fps)) + 1
    times = np.arange(n) / fps
    root_along = speed * times
    values = np.full(n, 0.3)
    events = []
    for k, t in enumerate(event_times):
        idx = int(round(t * fps))
        cluster = ExtremaCluster(
            kind="max",
            members=(idx,),
            index=idx,
            value=float(step_length_m),
            time_s=float(times[idx]),
            prominence=0.3,
        )
        events.append(
            StepEvent(
                foot="left" if k % 2 == 0 else "right",
                time_s=float(t),
                index=idx,
                step_length_m=float(step_length_m),
                cluster=cluster,
            )
        )
    signal = StepSignal(times=times, values=values)
    return StepDetection(
        events=tuple(events),
        walking_direction=(0.0, 0.0, 1.0),
        travel_m=float(root_along[-1]),
        clusters=tuple(e.cluster for e in events),
        signal=signal,
        root_along=root_along,
    )


def test_ten_steps_over_five_seconds_is_cadence_120():
    det = _detection(np.linspace(1.0, 6.0, 11), speed=1.3)
    rep = compute_report(det)
    assert rep.n_events == 11
    assert rep.steps_used == 10
    assert rep.duration_used_s == pytest.approx(5.0)
    assert rep.cadence_steps_min == pytest.approx(120.0)
    assert rep.step_time_s == pytest.approx(0.5)
    assert rep.gait_speed_m_s == pytest.approx(1.3, rel=1e-9)


def test_cadence_step_time_identity():
    det = _detection([0.8, 1.37, 1.99, 2.54, 3.2])
    rep = compute_report(det)
    assert rep.cadence_steps_min * rep.step_time_s == pytest.approx(60.0, abs=1e-9)
    assert rep.steps_used == rep.n_events - 1
    assert len(rep.step_times_s) == rep.steps_used
    assert sum(rep.step_times_s) == pytest.approx(rep.duration_used_s)


def test_speed_is_travel_over_duration():
    det = _detection([1.0, 1.5, 2.0, 2.5], speed=1.42)
    rep = compute_report(det)
    assert rep.gait_speed_m_s == pytest.approx(1.42, rel=1e-12)
    assert rep.travel_m == pytest.approx(1.42 * 1.5, rel=1e-12)


def test_step_lengths_reported_per_counted_step():
    det = _detection([1.0, 1.5, 2.0], step_length_m=0.71)
    rep = compute_report(det)
    assert rep.step_lengths_cm == pytest.approx((71.0, 71.0))
    assert rep.step_length_cm == pytest.approx(71.0)


def test_single_event_is_too_few():
    det = _detection([1.0])
    with pytest.raises(TooFewSteps):
        compute_report(det)


def test_full_pipeline_report_matches_truth(fitted_clean, clean_walk):
    _, truth = clean_walk
    rep = compute_report(detect_steps(fitted_clean))
    assert rep.gait_speed_m_s == pytest.approx(truth.speed_m_s, rel=0.02)
    assert rep.cadence_steps_min == pytest.approx(truth.cadence_steps_min, rel=0.02)
    assert rep.step_length_cm == pytest.approx(100 * truth.step_length_m, rel=0.02)
    assert rep.step_time_s == pytest.approx(truth.step_time_s, rel=0.02)
