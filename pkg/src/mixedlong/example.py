"""Bundled SYNTHETIC example data.

The real cohort this layout imitates is not redistributable, so the shipped
files are generated here from a fixed seed. They contain no real subject.
The layout is 256 subjects followed for up to 5 years, with these columns:

* sync:  ``id,time,y,age,education,mci,ad,apoe4_1,apoe4_2``.
  The response is an MMSE-like score observed at 1 to 7 visits. The six
  baseline covariates are repeated at every visit.
* async: ``id,time,fa``.
  FA is an imaging marker observed at 1 to 8 visits on its own schedule.

Times are in years, so reading the files rescales them to [0, 1].
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .core import LongitudinalDataset, SubjectRecord
from .simulation import ProcessSpec, sample_gp

SEED = 20240515
N_SUBJECTS = 256
YEARS = 5.0
SYNC_FILE = "example_sync.csv"
ASYNC_FILE = "example_async.csv"
X_NAMES = ("age", "education", "mci", "ad", "apoe4_1", "apoe4_2")
Z_NAMES = ("fa",)

# generating coefficients (synthetic truth)
TRUTH = {"alpha": 27.0, "age": -0.03, "education": 0.15, "mci": -1.5, "ad": -4.0,
         "apoe4_1": -0.8, "apoe4_2": -1.6, "fa": 1.2}


def _visits(rng, lo, hi):
    k = int(rng.integers(lo, hi + 1))
    days = rng.choice(np.arange(1, int(YEARS * 365)), size=k - 1, replace=False)
    return np.round(np.sort(np.concatenate([[0], days])) / 365.0, 4)


def make_example_dataset(seed=SEED, n=N_SUBJECTS) -> LongitudinalDataset:
    """Generate the example dataset with times in years (not rescaled)."""
    rng = np.random.default_rng(seed)
    b = TRUTH
    subs = []
    for i in range(n):
        age = round(float(rng.normal(73, 7)), 1)
        edu = float(rng.integers(8, 21))
        stage = rng.choice(3, p=[0.35, 0.45, 0.2])
        mci, ad = float(stage == 1), float(stage == 2)
        copies = rng.choice(3, p=[0.55, 0.35, 0.1])
        a1, a2 = float(copies == 1), float(copies == 2)
        t = _visits(rng, 1, 7)
        s = _visits(rng, 1, 8)
        s = s + np.round(rng.uniform(0.01, 0.2), 4) * (s > 0)
        s = np.unique(np.clip(s, 0, YEARS))
        union = np.union1d(t, s)
        # slowly varying FA trajectory evaluated on both grids
        fa = -0.4 - 0.05 * union + 0.3 * sample_gp(union / YEARS, ProcessSpec("zero", "exp_abs"), rng)
        fa_t = fa[np.searchsorted(union, t)]
        fa_s = np.round(fa[np.searchsorted(union, s)], 4)
        base = (b["alpha"] + b["age"] * (age - 73) + b["education"] * (edu - 16)
                + b["mci"] * mci + b["ad"] * ad + b["apoe4_1"] * a1 + b["apoe4_2"] * a2)
        decline = -(0.2 + 0.5 * mci + 1.0 * ad) * t
        y = np.round(np.clip(base + decline + b["fa"] * fa_t + rng.normal(0, 1.0, t.size), 0, 30), 2)
        x = np.tile([age, edu, mci, ad, a1, a2], (t.size, 1))
        subs.append(SubjectRecord(f"S{i + 1:03d}", t, y, x, s, fa_s.reshape(-1, 1)))
    return LongitudinalDataset(tuple(subs), len(X_NAMES), 1, X_NAMES, Z_NAMES)


def example_paths():
    """Paths of the bundled sync and async CSV files."""
    root = resources.files("mixedlong") / "data"
    return Path(str(root / SYNC_FILE)), Path(str(root / ASYNC_FILE))


def load_example(rescale="auto") -> LongitudinalDataset:
    from .io import read_dataset

    sync, asyn = example_paths()
    return read_dataset(sync, asyn, rescale)
