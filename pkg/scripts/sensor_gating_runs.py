"""Closed-loop sensor-gating gains per sensor preset (filtered control, averaged over seeds)."""

import argparse

from seo.config import config_from_dict, default_models
from seo.harness import run_batch
from seo.optimizers import SENSOR_PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=25)
    ap.add_argument("--obstacles", type=int, default=4)
    args = ap.parse_args()
    tau = 0.020
    print(f"{'sensor':<18}{'p=tau':>9}{'p=2tau':>9}{'delta_max':>11}")
    for name in SENSOR_PRESETS:
        models = [{"id": m.id, "subset": m.subset.value, "period_p": m.period_p, "latency_T": m.latency_T,
                   "power_P": m.power_P, "sensor": None if m.critical else name} for m in default_models(tau)]
        cfg = config_from_dict({"mode": "sensor-gate", "filtered": True, "obstacle_count": args.obstacles,
                                "models": models})
        r = run_batch(cfg, range(args.seeds)).report
        print(f"{name:<18}{100 * r.gains['detector_p1']:>8.2f}%{100 * r.gains['detector_p2']:>8.2f}%"
              f"{r.mean_delta_max:>11.3f}")


if __name__ == "__main__":
    main()
