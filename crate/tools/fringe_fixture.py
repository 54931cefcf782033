"""Regenerate the cross-implementation fixture of the fringe network:
random weights, a 16x16 two-channel input and the torch forward output."""

import argparse
from pathlib import Path

import numpy as np
import torch

from ftbw import FringeNet, save_ftbw, write_pfm

ap = argparse.ArgumentParser()
ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "crates/core/tests/fixtures"))
ap.add_argument("--seed", type=int, default=1234)
args = ap.parse_args()

torch.manual_seed(args.seed)
net = FringeNet()
with torch.no_grad():
    for bn in net.bns.values():
        bn.weight.uniform_(0.5, 1.5)
        bn.bias.uniform_(-0.2, 0.2)
        bn.running_mean.uniform_(-0.2, 0.2)
        bn.running_var.uniform_(0.5, 2.0)
net.eval()

rng = np.random.default_rng(args.seed)
x = rng.random((2, 16, 16), dtype=np.float32)
with torch.no_grad():
    y = net(torch.from_numpy(x)[None])[0, 0].numpy()

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
save_ftbw(net, out / "fringe_random.ftbw")
write_pfm(out / "fringe_zc.pfm", x[0])
write_pfm(out / "fringe_zg.pfm", x[1])
write_pfm(out / "fringe_out.pfm", y)
print("max |y| =", float(np.abs(y).max()))
