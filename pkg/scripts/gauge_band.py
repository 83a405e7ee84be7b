"""Relativistic gauge on a grid of start points and the Neumann-series band of V/G.

The gauge is estimated at dt and dt/2 (with first-order extrapolation); the
perturbed Green function and Martin kernel come from the deterministic
series on the polar grid.
"""
import argparse
from dataclasses import dataclass

import numpy as np

from stablelab import feynman_kac as fk
from stablelab.geometry import unit_disk
from stablelab.kernels import StableParams, ball_martin
from stablelab.rng import RngState


@dataclass
class Config:
    m: float = 1.0
    N: int = 2000
    dt: float = 0.01
    seed: int = 0


GRID = [(0, 0), (0.5, 0), (0, 0.5), (-0.5, 0), (0, -0.5),
        (0.636, 0.636), (-0.636, 0.636), (-0.636, -0.636), (0.636, -0.636)]


def main(cfg: Config):
    p, disk = StableParams(2, 1.0), unit_disk()
    vals = []
    print("x                 coarse     fine       richardson")
    for i, x in enumerate(GRID):
        g = fk.relativistic_gauge(RngState(cfg.seed, i), p, disk, cfg.m, x, cfg.dt, cfg.N)
        vals.append(g.fine.mean)
        print(f"{str(x):16s}  {g.coarse.mean:.5f}  {g.fine.mean:.5f}  {g.richardson:.5f}")
    print(f"band ratio max/min = {max(vals) / min(vals):.4f}")

    spec = fk.relativistic_spec(p, cfg.m, disk)
    series = fk.perturbed_green_series(p, spec)
    print(f"\nNeumann series: {series.as_dict()}")
    z = np.array([1.0, 0.0])
    for x in [(0.0, 0.0), (0.5, 0.0), (0.3, 0.4), (-0.6, 0.2)]:
        kd = fk.perturbed_martin(p, spec, x, z, series=series)
        print(f"K_D({x}, z) = {kd:.5f}   M = {float(ball_martin(p, x, z)):.5f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in Config().__dict__.items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    main(Config(**vars(ap.parse_args())))
