"""Metric suite over episode logs: landing error, peak height, mechanical
energy, peak power, success rates, and binned aggregates with confidence
intervals. Every metric is a pure function of the log."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Z_95 = 1.959963984540054

BIN_WIDTH = 0.05
BIN_MAX = 1.05


def landing_error_metric(log):
    """Horizontal distance between commanded and recorded landing, meters.

    NaN when the episode never landed (failures are excluded from error
    aggregates; they count against the success rate instead).
    """
    if log.landed_position is None:
        return float("nan")
    return float(np.linalg.norm(np.asarray(log.target) - log.landed_position))


def peak_height_metric(log):
    """Apex gain over the initial standing base height; 0 without takeoff."""
    peak = float(np.max(log.base_pos[:, 2])) if len(log.base_pos) else 0.0
    return max(0.0, peak - log.initial_base_height)


def mechanical_energy_metric(log, inner_dt=0.001):
    """Total absolute mechanical motor work, sum |tau . dq| dt at 1 kHz.

    Spring torques are excluded: the springs are passive. Uses the inner
    traces when the episode was run with tracing; otherwise the per-step
    accumulation the simulator maintained (the same quantity).
    """
    if isinstance(log.inner_torque, np.ndarray) and log.inner_torque.size:
        return float(
            np.sum(np.abs(log.inner_torque * log.inner_joint_vel)) * inner_dt
        )
    return float(np.sum(log.motor_energy))


def peak_power_metric(log):
    """Max over inner steps of sum_j |tau_j dq_j|, watts."""
    if isinstance(log.inner_torque, np.ndarray) and log.inner_torque.size:
        return float(
            np.max(np.sum(np.abs(log.inner_torque * log.inner_joint_vel), axis=1))
        )
    if len(log.peak_power) == 0:
        return 0.0
    return float(np.max(log.peak_power))


def peak_torque_metric(log):
    if len(log.peak_torque) == 0:
        return 0.0
    return float(np.max(log.peak_torque))


def wilson_interval(successes, trials, z=Z_95):
    """Wilson 95% score interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def success_rate_metric(records):
    """Completed fraction with its Wilson 95% interval."""
    trials = len(records)
    successes = sum(1 for r in records if r.success)
    rate = successes / trials if trials else 0.0
    return rate, wilson_interval(successes, trials)


def confidence_interval_95(samples):
    """(mean, half-width) via the normal approximation."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n == 0:
        return float("nan"), float("nan")
    mean = float(samples.mean())
    if n == 1:
        return mean, float("nan")
    half = Z_95 * float(samples.std(ddof=1)) / np.sqrt(n)
    return mean, half


@dataclass
class MetricsRecord:
    """Per-trial metric row."""

    trial: int
    target: np.ndarray
    landed: np.ndarray
    landing_error: float
    success: bool
    termination_cause: str
    peak_height: float
    total_energy: float
    peak_power: float
    peak_torque: float
    episode_steps: int

    @staticmethod
    def from_log(trial, log):
        cause = log.termination_cause
        return MetricsRecord(
            trial=trial,
            target=np.asarray(log.target, dtype=float),
            landed=None if log.landed_position is None else log.landed_position.copy(),
            landing_error=landing_error_metric(log),
            success=cause == "completed",
            termination_cause=cause,
            peak_height=peak_height_metric(log),
            total_energy=mechanical_energy_metric(log),
            peak_power=peak_power_metric(log),
            peak_torque=peak_torque_metric(log),
            episode_steps=len(log.reward),
        )


def distance_bin(target):
    """5 cm bin index by commanded distance norm; bins partition [0, 1.05]."""
    r = float(np.linalg.norm(target))
    return min(int(r / BIN_WIDTH), int(BIN_MAX / BIN_WIDTH) - 1)


@dataclass
class BinAggregate:
    bin_index: int
    distance_lo: float
    distance_hi: float
    trials: int
    successes: int
    mean_landing_error: float
    landing_error_ci: float
    mean_peak_height: float
    peak_height_ci: float
    mean_energy: float
    energy_ci: float
    mean_peak_power: float
    peak_power_ci: float
    success_rate: float
    success_lo: float
    success_hi: float


def aggregate_by_distance(records):
    """Group records into 5 cm distance bins; errors over successes only."""
    bins = {}
    for rec in records:
        bins.setdefault(distance_bin(rec.target), []).append(rec)
    out = []
    for idx in sorted(bins):
        recs = bins[idx]
        good = [r for r in recs if r.success and np.isfinite(r.landing_error)]
        err_mean, err_ci = confidence_interval_95([r.landing_error for r in good])
        ph_mean, ph_ci = confidence_interval_95([r.peak_height for r in good])
        en_mean, en_ci = confidence_interval_95([r.total_energy for r in good])
        pp_mean, pp_ci = confidence_interval_95([r.peak_power for r in good])
        rate, (lo, hi) = success_rate_metric(recs)
        out.append(
            BinAggregate(
                bin_index=idx,
                distance_lo=idx * BIN_WIDTH,
                distance_hi=(idx + 1) * BIN_WIDTH,
                trials=len(recs),
                successes=sum(r.success for r in recs),
                mean_landing_error=err_mean,
                landing_error_ci=err_ci,
                mean_peak_height=ph_mean,
                peak_height_ci=ph_ci,
                mean_energy=en_mean,
                energy_ci=en_ci,
                mean_peak_power=pp_mean,
                peak_power_ci=pp_ci,
                success_rate=rate,
                success_lo=lo,
                success_hi=hi,
            )
        )
    return out
