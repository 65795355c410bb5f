from pathlib import Path

import numpy as np
import pytest

from agbchange.data_ingest import RasterStack


def make_stack(bands, *, x0=0.0, y0=100.0, pixel_size=10.0, nodata=-9999.0, label=""):
    arrays = {k: np.asarray(v, dtype="<f4") for k, v in bands.items()}
    nrows, ncols = next(iter(arrays.values())).shape
    return RasterStack(ncols, nrows, x0, y0, pixel_size, nodata, arrays, label)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


FIXTURE_4X4_PLOTS = """plot_id,x,y,forest,agb_t1,agb_t2
p1,5,35,1,100,102
p2,15,25,1,50,52
p3,25,15,0,80,20
p4,15,5,1,120,130
"""


def write_fixture_4x4(directory, *, coefficient=2.0, intercept=1.0):
    """Write the 4x4 end-to-end fixture and return its paths plus expected values.

    Grid: 10 m pixels, origin (0, 40). Band ``B1`` at t2 holds k/4 for
    pixel k in row-major order. Columns 0-1 are forest, so the forest
    pixels are k in {0, 1, 4, 5, 8, 9, 12, 13}. With the model
    1 + 2*raw(B1)@t2 the prediction is 1 + k/2 and the forest sum is 34,
    giving a population-mean synthetic value of 34/16 = 2.125 t/ha.

    Plots sit at pixels 0, 5, 10 and 13. Responses y = [2, 2, 0, 10]
    (p3 is non-forest, so its change counts as zero). Predictions at the
    forest plots are 1, 3.5 and 7.5, so the residuals are [1, -1.5, 0, 2.5].
    With A = 1000 ha:

    * t_BE = 1000 * 3.5 = 3500 t; S^2 = 59/3; Var = 1e6 * 59/12 t^2
    * t_MA = 1000 * 2.125 + 250 * 2 = 2625 t; Var = 1e6/12 * 8.5 t^2
    """
    from agbchange.data_ingest import write_raster
    from agbchange.features import TermSpec
    from agbchange.subset_selection import ModelFit

    directory = Path(directory)
    b1 = (np.arange(16, dtype=float) / 4).reshape(4, 4)
    mask = np.zeros((4, 4))
    mask[:, :2] = 1
    paths = {
        "plots": directory / "plots.csv",
        "t2": directory / "t2.bgrid",
        "mask": directory / "mask.bgrid",
        "model": directory / "model.json",
    }
    paths["plots"].write_text(FIXTURE_4X4_PLOTS)
    paths["t2"].write_bytes(write_raster(make_stack({"B1": b1}, y0=40.0, label="t2")))
    paths["mask"].write_bytes(write_raster(make_stack({"mask": mask}, y0=40.0)))
    model = ModelFit("uni_temporal", [TermSpec("raw", "t2", "B1")], intercept, [coefficient])
    paths["model"].write_text(model.to_json())
    expected = {
        "A": 1000.0,
        "t_be": 3500.0,
        "var_be": 1e6 * 59 / 12,
        "t_ma": 2625.0,
        "var_ma": 1e6 / 12 * 8.5,
        "synthetic_mean": 2.125,
        "n_forest_pixels": 8,
    }
    return {k: str(v) for k, v in paths.items()}, expected
