# %% [markdown]
# # Particle filter against the map-matched EKF
#
# The `compare` command simulates a scenario, runs both filters and writes
# an error report. This script does the same through the library and
# prints the summary table.

# %%
from pathlib import Path
import tempfile

import numpy as np

from railpf.cli import main
from railpf import csvio

# %%
out = Path(tempfile.mkdtemp()) / "mixed"
main(["compare", "--preset", "mixed-outages", "--seed", "0", "--out", str(out)])
print((out / "report" / "summary.csv").read_text())
print((out / "report" / "outages.csv").read_text())

# %% Render the plots with gnuplot if available:
#   cd <out>/report && gnuplot plots.gp
pf = csvio.read_table(out / "report" / "errors_pf.csv", ("t", "euclidean", "gnss_available"))
ekf = csvio.read_table(out / "report" / "errors_ekfmm.csv", ("t", "euclidean", "gnss_available"))
blind = pf["gnss_available"] == 0
print(f"during outages: PF mean {pf['euclidean'][blind].mean():.2f} m, "
      f"EKFMM mean {ekf['euclidean'][blind].mean():.2f} m")
print(f"report written to {out / 'report'}")
