"""h-transformed walks on the unit disk: endpoints, lifetime and the u/h supermartingale check."""
import argparse
import math
from dataclasses import dataclass

import numpy as np

from stablelab import fatou_lab as fl
from stablelab import measures
from stablelab import sampler as sm
from stablelab.geometry import unit_disk
from stablelab.kernels import StableParams, conditioned_lifetime_quadrature
from stablelab.rng import Moments, RngState


@dataclass
class Config:
    alpha: float = 1.0
    N: int = 1000
    seed: int = 0


def main(cfg: Config):
    p, disk = StableParams(2, cfg.alpha), unit_disk()
    z = np.array([1.0, 0.0])
    res = sm.conditioned_endpoints(RngState(cfg.seed), p, disk, sm.BallMartinHarmonic.pole(p, z), (0.0, 0.0), cfg.N)
    d = np.linalg.norm(res.endpoints - z, axis=1)
    life = Moments.of(res.lifetime).estimate()
    print(f"pole chains: {100 * np.mean(d < 0.05):.1f}% end within 0.05 of z, mean steps {res.steps.mean():.1f}")
    print(f"lifetime {life.mean:.4f} +- {life.stderr:.4f}; quadrature {conditioned_lifetime_quadrature(p, z):.4f}")

    u_spec, h_spec = measures.cosine(0.5, 0.5), measures.uniform()
    ratio = lambda pts: np.array([fl.martin_ratio(p, u_spec, h_spec, q)[2] for q in pts])
    cur, nxt = sm.ratio_transitions(RngState(cfg.seed + 1), p, disk, sm.BallMartinHarmonic(p, h_spec), ratio,
                                    (0.3, 0.2), cfg.N)
    diff = nxt - cur
    print(f"{cur.size} transitions: mean increment of u/h {diff.mean():.2e} +- "
          f"{diff.std(ddof=1) / math.sqrt(diff.size):.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in Config().__dict__.items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    main(Config(**vars(ap.parse_args())))
