"""Interval gains of sensor gating at a fixed deadline, for each sensor preset and detector period."""

import argparse

from seo.ledger import compute_gains, interval_gating_ledger
from seo.optimizers import SENSOR_PRESETS, GatingMode
from seo.scheduler import ModelSpec, Subset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta-max", type=int, default=4)
    ap.add_argument("--tau-ms", type=float, default=20.0)
    ap.add_argument("--span", choices=["sensor_period", "base_period"], default="sensor_period")
    args = ap.parse_args()
    tau = args.tau_ms / 1e3
    print(f"{'sensor':<18}{'P_meas W':>9}{'P_mech W':>9}{'p=tau':>9}{'p=2tau':>9}")
    for name, prof in SENSOR_PRESETS.items():
        models = [
            ModelSpec("p1", period_p=tau, latency_T=0.017, power_P=7.0, sensor=name),
            ModelSpec("p2", period_p=2 * tau, latency_T=0.017, power_P=7.0, sensor=name),
            ModelSpec("estimator", Subset.CRITICAL, period_p=tau, latency_T=0.017, power_P=7.0),
        ]
        led = interval_gating_ledger(models, args.delta_max, GatingMode.SENSOR_AND_MODEL, tau,
                                     measurement_span=args.span)
        g = compute_gains(led, models, GatingMode.SENSOR_AND_MODEL, measurement_span=args.span).gains
        print(f"{name:<18}{prof.P_meas:>9.1f}{prof.P_mech:>9.1f}{100 * g['p1']:>8.2f}%{100 * g['p2']:>8.2f}%")


if __name__ == "__main__":
    main()
