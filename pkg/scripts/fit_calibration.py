"""Refit the shipped calibration.json and print the residual table."""

import json
import sys
from pathlib import Path

from amser import harness

OUT = Path(__file__).resolve().parents[1] / "src" / "amser" / "data" / "calibration.json"


def main(out=OUT):
    fits = harness.fit_calibrations(harness.load_config())
    Path(out).write_text(json.dumps(fits, sort_keys=True, indent=1) + "\n")
    for app in harness.APPLICATIONS:
        print(f"{app}: max relative error {fits[app]['max_rel_error']:.4f}")
        for r in fits[app]["residuals"]:
            print(f"  S{r['scenario']} {r['metric']:<20} target {r['target']:6.3f} "
                  f"fitted {r['fitted']:6.3f} ({100 * r['rel_error']:+.2f}%)")
    print(f"wrote {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
