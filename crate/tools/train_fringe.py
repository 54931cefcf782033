"""Train the fringe network on a dataset written by `aberrex degrade` and
export FTBW weights.

The loss is the mean absolute gap between the clean chroma residual
u_c - u_G and the corrected one z_c - phi(z_c, z_G) - z_G, over c in {R, B}.
"""

import argparse
import csv
import math
import time
from pathlib import Path

import numpy as np
import torch

from torch import nn

from ftbw import GRAPH, FringeNet, load_ftbw, read_pfm, save_ftbw

ap = argparse.ArgumentParser()
ap.add_argument("data", type=Path)
ap.add_argument("out", type=Path)
ap.add_argument("--minutes", type=float, default=120.0)
ap.add_argument("--steps", type=int, default=100000)
ap.add_argument("--batch", type=int, default=16)
ap.add_argument("--crop", type=int, default=48)
ap.add_argument("--lr", type=float, default=3e-4)
ap.add_argument("--identity", type=float, default=0.1, help="share of aligned clean inputs")
ap.add_argument("--resume", type=Path)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

torch.set_num_threads(1)
torch.manual_seed(args.seed)
rng = np.random.default_rng(args.seed)

rows = list(csv.DictReader(open(args.data / "manifest.tsv"), delimiter="\t"))
clean = np.stack([read_pfm(args.data / r["clean"]) for r in rows])
deblurred = np.stack([read_pfm(args.data / r["deblurred"]) for r in rows])
print(f"{len(rows)} samples of {clean.shape[2:]}", flush=True)

net = FringeNet()
if args.resume:
    load_ftbw(net, args.resume)
else:
    # start as the identity correction
    last = net.convs[str(GRAPH[-1][1])]
    nn.init.zeros_(last.weight)
    nn.init.zeros_(last.bias)
opt = torch.optim.Adam(net.parameters(), lr=args.lr)


def batch():
    n, _, h, w = clean.shape
    idx = rng.integers(0, n, args.batch)
    xs, ts = [], []
    for i in idx:
        r, c = rng.integers(0, h - args.crop + 1), rng.integers(0, w - args.crop + 1)
        u = clean[i, :, r : r + args.crop, c : c + args.crop]
        z = deblurred[i, :, r : r + args.crop, c : c + args.crop]
        if rng.random() < 0.5:
            u, z = u[:, :, ::-1], z[:, :, ::-1]
        if rng.random() < 0.5:
            u, z = u[:, ::-1], z[:, ::-1]
        if rng.random() < 0.5:
            u, z = u.transpose(0, 2, 1), z.transpose(0, 2, 1)
        for ch in (0, 2):
            if rng.random() < args.identity:
                xs.append(np.stack([u[ch], u[1]]))
                ts.append(np.zeros_like(u[ch]))
            else:
                xs.append(np.stack([z[ch], z[1]]))
                ts.append(z[ch] - z[1] - (u[ch] - u[1]))
    x = torch.from_numpy(np.ascontiguousarray(np.stack(xs)))
    t = torch.from_numpy(np.ascontiguousarray(np.stack(ts)))[:, None]
    return x, t


start = time.time()
budget = args.minutes * 60
smooth = None
step = 0
while step < args.steps and time.time() - start < budget:
    frac = min(1.0, (time.time() - start) / budget)
    for g in opt.param_groups:
        g["lr"] = 1e-5 + 0.5 * (args.lr - 1e-5) * (1 + math.cos(math.pi * frac))
    net.train()
    x, t = batch()
    loss = (net(x) - t).abs().mean() * 2  # summed over the two chroma channels
    opt.zero_grad()
    loss.backward()
    opt.step()
    smooth = loss.item() if smooth is None else 0.98 * smooth + 0.02 * loss.item()
    step += 1
    if step % 50 == 0:
        print(f"step {step} t={time.time() - start:.0f}s loss {smooth:.5f}", flush=True)
    if step % 500 == 0:
        net.eval()
        save_ftbw(net, args.out)
net.eval()
save_ftbw(net, args.out)
print(f"done after {step} steps, smoothed loss {smooth:.5f}", flush=True)
