"""Regenerate the bundled sample dataset in src/restsel/data from the simulation module."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from restsel.simulation import TrueModel, ar1_covariance, calibrate_sigma0, sample_design, sample_response

SEED = 20240611
N, P = 60, 8
BETA0 = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def sample_files() -> dict:
    Sigma0 = ar1_covariance(P, 0.5)
    truth = TrueModel(np.array(BETA0), calibrate_sigma0(BETA0, Sigma0, 0.9), Sigma0)
    rng = np.random.Generator(np.random.PCG64(SEED))
    X = sample_design(N, Sigma0, rng)
    y = sample_response(X, truth, rng)
    return {
        "sample_design.csv": "".join(",".join(repr(float(v)) for v in row) + "\n" for row in X),
        "sample_response.csv": "".join(repr(float(v)) + "\n" for v in y),
    }


def main(outdir: str) -> None:
    for name, body in sample_files().items():
        (Path(outdir) / name).write_text(body)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else str(Path(__file__).resolve().parents[1] / "src" / "restsel" / "data"))
