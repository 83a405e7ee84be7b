"""Relative Fatou limits along radial, Stolz and tangential approach paths.

For u the Martin integral of an arc indicator and h that of the uniform
measure, non-tangential paths to the arc centre converge to 1; the
oscillation witness shows a tangential path along which u/h keeps
oscillating while radial limits exist.
"""
import argparse
from dataclasses import dataclass

from stablelab import fatou_lab as fl
from stablelab import measures
from stablelab.kernels import StableParams


@dataclass
class Config:
    alpha: float = 1.0
    half_width: float = 0.5
    K: int = 5


def main(cfg: Config):
    p = StableParams(2, cfg.alpha)
    u, h = measures.arc_indicator(0.0, cfg.half_width), measures.uniform()
    for name, path in [("radial", fl.Radial(0.0)), ("stolz, one side", fl.StolzSequence(0.0, side=1)),
                       ("stolz, alternating", fl.StolzSequence(0.0)),
                       ("stolz, corkscrew", fl.StolzSequence(0.0, rule="corkscrew")),
                       ("tangential circle", fl.TangentialCircle(0.0))]:
        d = fl.ratio_probe(p, u, h, path)
        print(f"{name:20s} {d.summary()}")
    band = fl.lemma_3_19_delta(p, 0.1, cfg.half_width, raise_on_failure=False)
    print(f"\nband 1 - eps <= u/h <= 1 with eps = 0.1: delta = {band.delta_used:.4f}, ok = {band.band_ok}")
    w = fl.oscillation_witness(p, cfg.K)
    print(f"witness K={cfg.K}: {w.summary()}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in Config().__dict__.items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    main(Config(**vars(ap.parse_args())))
