#!/usr/bin/env python3
"""BER/FER of the (1024, 512) LDPC code over BPSK/AWGN for a range of Eb/N0 values.

    python scripts/ldpc_waterfall.py --ebn0 1 1.5 2 2.5 3 --info-bits 1000000
"""

import argparse
import time

import numpy as np

from aesc.phy.channel import demod_llr, modulate_bpsk, noise_var
from aesc.phy.ldpc import make_code


def simulate(ebn0_db: float, info_bits: int, seed: int = 0, batch: int = 256):
    code = make_code()
    # rate 1/2 and per-dimension noise variance: Es/N0 per real dimension equals Eb/N0
    s2 = noise_var(ebn0_db + 10 * np.log10(2 * code.rate))
    rng = np.random.default_rng([seed, int(round(ebn0_db * 100))])
    n_cw = -(-info_bits // code.k)
    errors = frame_errors = iters = 0
    for start in range(0, n_cw, batch):
        b = min(batch, n_cw - start)
        u = rng.integers(0, 2, (b, code.k), dtype=np.uint8)
        x = modulate_bpsk(code.encode(u))
        y = x + np.sqrt(s2) * rng.standard_normal(x.shape)
        res = code.decode(demod_llr(y, 1.0, s2))
        wrong = res.info_bits != u
        errors += int(wrong.sum())
        frame_errors += int(wrong.any(axis=1).sum())
        iters += int(res.iterations.sum())
    return errors / (n_cw * code.k), frame_errors / n_cw, iters / n_cw, n_cw * code.k


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ebn0", type=float, nargs="+", default=[1.0, 1.5, 2.0, 2.5, 3.0])
    ap.add_argument("--info-bits", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print("ebn0_db,ber,fer,mean_iterations,info_bits,seconds")
    for e in args.ebn0:
        t = time.time()
        ber, fer, it, n = simulate(e, args.info_bits, args.seed)
        print(f"{e:g},{ber:.3e},{fer:.3e},{it:.2f},{n},{time.time() - t:.1f}")


if __name__ == "__main__":
    main()
