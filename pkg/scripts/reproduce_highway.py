"""Highway MTBF reproduction from the published situation table.

Prints the model tree for a speed-independent miss rate, kappa, the required
perception error rates for a range of target MTBFs and the human baseline.
With --tracks the situation table is re-extracted from track files first.
"""
import argparse
import json
from pathlib import Path

from avmtbf import reference as ref
from avmtbf.model import (
    FailureModelTree,
    MissionProfile,
    failure_rate_extended,
    human_baseline_mtbf,
    kappa,
    render_tree,
    required_error_rate,
)
from avmtbf.situations import SituationTable, extract_situation_table, ingest_tracks


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rate", type=float, default=ref.HIGHWAY_MISS_RATE_PER_HOUR, help="severe miss rate, errors/h")
    ap.add_argument("--tracks", help="track CSV directory to extract the situation table from")
    ap.add_argument("--out", default="results/highway", help="output directory")
    args = ap.parse_args()

    part = ref.highway_partition()
    if args.tracks:
        table = extract_situation_table(ingest_tracks(args.tracks), part)
    else:
        table = SituationTable(part, ref.HIGHWAY_SPEED_PROBABILITY, ref.HIGHWAY_DECELERATING,
                               ref.HIGHWAY_ACCELERATING_CLOSE, ref.HIGHWAY_CONSTANT_CLOSE)
    tree = FailureModelTree((MissionProfile.from_tables("highway", 1.0, table, constant_rate=args.rate),))
    result = failure_rate_extended(tree)
    k = kappa(table.speed_probability, table.total)
    baseline = human_baseline_mtbf(ref.HIGHWAY_SEVERE_ACCIDENTS, ref.HIGHWAY_VEHICLE_KM, ref.HIGHWAY_AVERAGE_SPEED_KMH)
    required = {f"{t:g}": required_error_rate(t, k) for t in (1e4, 1e5, 1e6, 1e7)}

    print(table.to_text())
    print(render_tree(tree, result))
    print(f"kappa = {k:.6f}")
    print(f"human baseline MTBF = {baseline:,.0f} h")
    for t, r in required.items():
        print(f"target {t:>6} h -> required miss rate {r:.3g} /h")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tree.txt").write_text(render_tree(tree, result))
    summary = {
        "kappa": k,
        "rate_per_hour": args.rate,
        "result": result.to_dict(),
        "human_baseline_hours": baseline,
        "required_rate_per_hour": required,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
