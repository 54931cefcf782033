"""FTBW weight files, PFM images and the fringe network in torch."""

import struct

import numpy as np
import torch
from torch import nn

# (tag, in, out, batch norm + relu) for convolution nodes; (tag, src) for adds
GRAPH = [
    ("conv", 1, 2, 16, True),
    ("conv", 2, 16, 32, True),
    ("conv", 3, 32, 64, True),
    ("conv", 4, 64, 64, True),
    ("conv", 5, 64, 64, True),
    ("add", 6, 3),
    ("conv", 7, 64, 32, True),
    ("add", 8, 2),
    ("conv", 9, 32, 16, True),
    ("add", 10, 1),
    ("conv", 11, 16, 1, False),
]


class FringeNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.convs = nn.ModuleDict()
        self.bns = nn.ModuleDict()
        for node in GRAPH:
            if node[0] != "conv":
                continue
            _, tag, cin, cout, bn = node
            self.convs[str(tag)] = nn.Conv2d(cin, cout, 3, padding=1, padding_mode="reflect")
            if bn:
                self.bns[str(tag)] = nn.BatchNorm2d(cout)

    def forward(self, x):
        outs = {}
        for node in GRAPH:
            if node[0] == "conv":
                tag = node[1]
                x = self.convs[str(tag)](x)
                if node[4]:
                    x = torch.relu(self.bns[str(tag)](x))
            else:
                tag, src = node[1], node[2]
                x = x + outs[src]
            outs[tag] = x
        return x


def tensors_of(net):
    out = []
    for node in GRAPH:
        if node[0] != "conv":
            continue
        tag = node[1]
        conv = net.convs[str(tag)]
        out.append((f"conv{tag}.w", conv.weight))
        out.append((f"conv{tag}.b", conv.bias))
        if node[4]:
            bn = net.bns[str(tag)]
            out += [
                (f"bn{tag}.gamma", bn.weight),
                (f"bn{tag}.beta", bn.bias),
                (f"bn{tag}.mean", bn.running_mean),
                (f"bn{tag}.var", bn.running_var),
            ]
    return out


def save_ftbw(net, path):
    tensors = tensors_of(net)
    with open(path, "wb") as f:
        f.write(b"FTBW" + struct.pack("<II", 1, len(tensors)))
        for name, t in tensors:
            a = t.detach().cpu().numpy().astype("<f4")
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)) + nb + struct.pack("<B", a.ndim))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(a.tobytes(order="C"))


def load_ftbw(net, path):
    data = open(path, "rb").read()
    assert data[:4] == b"FTBW"
    _, count = struct.unpack_from("<II", data, 4)
    pos = 12
    found = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + n].decode()
        pos += n
        rank = data[pos]
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if dims else 1
        found[name] = np.frombuffer(data, "<f4", size, pos).reshape(dims)
        pos += 4 * size
    with torch.no_grad():
        for name, t in tensors_of(net):
            t.copy_(torch.from_numpy(found[name].copy()))


def read_pfm(path):
    """Returns an array of shape (channels, height, width)."""
    with open(path, "rb") as f:
        kind = f.readline().strip()
        w, h = map(int, f.readline().split())
        scale = float(f.readline())
        ch = 3 if kind == b"PF" else 1
        a = np.frombuffer(f.read(), "<f4" if scale < 0 else ">f4", w * h * ch)
    a = a.reshape(h, w, ch)[::-1]
    return np.ascontiguousarray(a.transpose(2, 0, 1)).astype(np.float32)


def write_pfm(path, a):
    """`a` has shape (height, width), written as a grayscale PFM."""
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1\n" % (w, h))
        f.write(np.ascontiguousarray(a[::-1]).astype("<f4").tobytes())
