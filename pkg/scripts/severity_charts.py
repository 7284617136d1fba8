"""Plot-ready severity grids.

standing.csv: impact speed against a standing obstacle over ego speed x gap.
false_alarm.csv: impact speed when the lead brakes on a false alarm, over
gap x brake duration, for one common speed.
false_alarm_boundary.csv: per brake duration, the largest gap that still
gives a severe collision (empty when none does) and the strongest impact
speed over all gaps.
"""
import argparse
from pathlib import Path

import numpy as np
import pandas as pd

from avmtbf.kinematics import (
    BrakingProfile,
    false_alarm_delta_v,
    false_alarm_severe_gap,
    impact_delta_v_standing,
    severity_from_delta_v,
)
from avmtbf.units import kmh_to_ms, ms_to_kmh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--speed", type=float, default=130.0, help="false-alarm common speed, km/h")
    ap.add_argument("--reaction-time", type=float, default=0.5)
    ap.add_argument("--deceleration", type=float, default=8.0)
    ap.add_argument("--out", default="results/severity")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prof = BrakingProfile(args.reaction_time, args.deceleration)

    rows = []
    for v in np.arange(0, 201, 5.0):
        for g in np.arange(0, 151, 2.0):
            dv = impact_delta_v_standing(kmh_to_ms(v), g, prof)
            rows.append((v, g, ms_to_kmh(dv), severity_from_delta_v(dv).name))
    pd.DataFrame(rows, columns=["speed_kmh", "gap_m", "delta_v_kmh", "severity"]).to_csv(out / "standing.csv", index=False)

    v = kmh_to_ms(args.speed)
    rows = []
    for g in np.arange(0, 61, 1.0):
        for d in np.arange(0.25, 5.01, 0.25):
            dv = false_alarm_delta_v(v, g, d, prof, prof)
            rows.append((g, d, None if dv is None else ms_to_kmh(dv), "none" if dv is None else severity_from_delta_v(dv).name))
    pd.DataFrame(rows, columns=["gap_m", "duration_s", "delta_v_kmh", "severity"]).to_csv(out / "false_alarm.csv", index=False)

    rows = []
    gaps = np.linspace(0, 100, 1001)
    for d in np.arange(0.25, 5.01, 0.25):
        g = false_alarm_severe_gap(v, d, prof, prof)
        peak = max((false_alarm_delta_v(v, x, d, prof, prof) or 0.0) for x in gaps)
        rows.append((d, np.nan if g is None else g, ms_to_kmh(peak)))
    bound = pd.DataFrame(rows, columns=["duration_s", "severe_gap_m", "peak_delta_v_kmh"])
    bound.to_csv(out / "false_alarm_boundary.csv", index=False)
    print(bound.to_string(index=False))


if __name__ == "__main__":
    main()
