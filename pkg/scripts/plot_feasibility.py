"""Plot feasible-instance counts per service count from a feasibility CSV.

    python scripts/plot_feasibility.py reports/feasibility.csv [out.png]

matplotlib is optional; without it the counts are printed as a table.
"""

import sys
from collections import defaultdict
from pathlib import Path

from nfvslice.experiments import VARIANTS, read_csv_rows

LABELS = {"full": "multi-path (P=2)", "single-path": "single path", "no-latency": "latency-blind + post-check"}


def counts(rows):
    table = defaultdict(lambda: dict.fromkeys(VARIANTS, 0))
    for r in rows:
        table[r["service_count"]][r["variant"]] += r["feasible"]
    return dict(sorted(table.items()))


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    table = counts(read_csv_rows(Path(sys.argv[1]).read_text()))
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("K  " + "  ".join(f"{v:>12}" for v in VARIANTS))
        for k, row in table.items():
            print(f"{k:<2} " + "  ".join(f"{row[v]:>12}" for v in VARIANTS))
        return
    ks = list(table)
    width = 0.27
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, v in enumerate(VARIANTS):
        ax.bar([k + (i - 1) * width for k in ks], [table[k][v] for k in ks], width, label=LABELS[v])
    ax.set_xlabel("services per instance")
    ax.set_ylabel("feasible instances")
    ax.set_xticks(ks)
    ax.legend()
    fig.tight_layout()
    out = sys.argv[2] if len(sys.argv) > 2 else "feasibility.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
