"""The command-line workflow end to end on synthetic inputs.

Run: python3 demos/06_cli_workflow.py
Writes its files to a temporary directory and prints the commands it runs.
"""

# %% [markdown]
# We rasterise a synthetic population, sample 150 plots, then run the
# same steps a user would run from the shell: validate, fit, estimate.

# %%
import json
import tempfile
from pathlib import Path

from agbchange.cli import main
from agbchange.data_ingest import format_plot_table, write_raster
from agbchange.simulation import SimConfig, draw_srs, gen_population

work = Path(tempfile.mkdtemp(prefix="agbchange-demo-"))
pop = gen_population(SimConfig(n_pixels=2500, bands=["B4", "B8", "B11", "B12"]))
stacks, mask = pop.to_rasters()
for label, s in stacks.items():
    (work / f"{label}.bgrid").write_bytes(write_raster(s))
(work / "mask.bgrid").write_bytes(write_raster(mask))
(work / "plots.csv").write_text(format_plot_table(draw_srs(pop, 150, seed=2)))


def run(*args):
    print("\n$ agbchange", " ".join(str(a) for a in args))
    code = main([str(a) for a in args])
    print("exit", code)
    return code


stack_flags = ["--stack", f"t1={work / 't1.bgrid'}", "--stack", f"t2={work / 't2.bgrid'}"]
run("validate", "--plots", work / "plots.csv", *stack_flags, "--mask", work / "mask.bgrid")
run("fit", "--plots", work / "plots.csv", *stack_flags, "--k-max", 3, "--m", 10, "--output", work / "model.json")
run("estimate", "--plots", work / "plots.csv", *stack_flags, "--mask", work / "mask.bgrid",
    "--model", work / "model.json", "--area", pop.area, "--output", work / "report.json", "--map", work / "dagb.bgrid")

# %%
report = json.loads((work / "report.json").read_text())
print(f"\ntrue total {pop.true_total / 1e6:.5f} Mt")
print(f"BE {report['t_be_Mt']:.5f} Mt (se {report['se_be_Mt']:.5f}); MA {report['t_ma_Mt']:.5f} Mt (se {report['se_ma_Mt']:.5f})")
print("files:", sorted(p.name for p in work.iterdir()))
