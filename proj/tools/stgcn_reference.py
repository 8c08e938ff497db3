#!/usr/bin/env python3
"""Reference ST-GCN forward pass in numpy and generator of parity fixtures.

Writes, under the output directory:
  layers.json                  per-layer test vectors in double precision
  <name>.json / <name>.bin     weight manifest and float32 payload
  <name>_window.json           standardized window plus expected scores

Usage: stgcn_reference.py [--out fixtures/stgcn] [--seed 7]
"""

import argparse
import json
import os
import zlib

import numpy as np

FORMAT = "rted-stgcn-weights"
VERSION = 1


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def glu(h, w, bw, v, bv):
    # h: [T, N, C], w/v: [K, C, C']
    t_len, k = h.shape[0], w.shape[0]
    out = []
    for t in range(t_len - k + 1):
        p = np.broadcast_to(bw, (h.shape[1], w.shape[2])).copy()
        q = np.broadcast_to(bv, (h.shape[1], v.shape[2])).copy()
        for j in range(k):
            p += np.einsum("nc,co->no", h[t + j], w[j])
            q += np.einsum("nc,co->no", h[t + j], v[j])
        out.append(p * sigmoid(q))
    return np.stack(out)


def adjacency(n, edges):
    a = np.zeros((n, n))
    for i, j in edges:
        if i != j:
            a[i, j] = 1.0
            a[j, i] = 1.0
    return a


def gcn_norm(n, edges):
    a = adjacency(n, edges) + np.eye(n)
    d = a.sum(axis=1) ** -0.5
    return d[:, None] * a * d[None, :]


def cheb_laplacian(n, edges):
    a = adjacency(n, edges)
    deg = a.sum(axis=1)
    inv = np.array([x ** -0.5 if x > 0 else 0.0 for x in deg])
    l_norm = np.eye(n) - inv[:, None] * a * inv[None, :]
    return l_norm - np.eye(n)  # 2 L / lambda_max - I, lambda_max = 2


def edge_net(attr, w1, b1, w2, b2, c_in, c_out):
    hidden = np.maximum(attr @ w1 + b1, 0.0)
    return (hidden @ w2 + b2).reshape(c_in, c_out)


def ec_conv(h, edges, attr, w, net):
    out = h @ w
    c_in, c_out = w.shape
    for k, (i, j) in enumerate(edges):
        if i == j:
            continue
        theta = edge_net(attr[k], *net, c_in, c_out)
        out[i] += h[j] @ theta
        out[j] += h[i] @ theta
    return out


def chebyshev(h, lhat, ws):
    zs = [h]
    if len(ws) > 1:
        zs.append(lhat @ h)
    while len(zs) < len(ws):
        zs.append(2.0 * lhat @ zs[-1] - zs[-2])
    return sum(z @ w for z, w in zip(zs, ws))


def relu(x):
    return np.maximum(x, 0.0)


def load_width(hp):
    return 1 + hp["tder_slots"]


def gen_width(hp):
    s = hp["bid_segments"]
    return hp["gen_slots"] * (2 * s + 5) + hp["dera_slots"] * 2 * s


def st_steps(hp):
    return hp["window"] - 2 * hp["st_blocks"] * (hp["kernel"] - 1)


def specs(hp):
    k = hp["kernel"]
    c0, c1, c2 = hp["st_channels"]
    out = []
    c_in = load_width(hp)
    for b in range(hp["st_blocks"]):
        p = "st%d." % b
        out += [(p + "t1.w", [k, c_in, c0]), (p + "t1.bw", [c0]), (p + "t1.v", [k, c_in, c0]),
                (p + "t1.bv", [c0]), (p + "gcn.w", [c0, c1]), (p + "t2.w", [k, c1, c2]),
                (p + "t2.bw", [c2]), (p + "t2.v", [k, c1, c2]), (p + "t2.bv", [c2])]
        c_in = c2
    out += [("st.fc.w", [st_steps(hp) * c2, hp["st_out"]]), ("st.fc.b", [hp["st_out"]])]
    e_in, ec, eh = gen_width(hp), hp["ec_channels"], hp["edge_hidden"]
    for l in range(hp["ec_layers"]):
        p = "ec%d." % l
        out += [(p + "w", [e_in, ec]), (p + "h1.w", [hp["edge_width"], eh]), (p + "h1.b", [eh]),
                (p + "h2.w", [eh, e_in * ec]), (p + "h2.b", [e_in * ec])]
        e_in = ec
    out += [("ec.fc.w", [ec, hp["ec_out"]]), ("ec.fc.b", [hp["ec_out"]])]
    for j in range(1, hp["cheb_k"] + 1):
        out.append(("fa.cheb.w%d" % j, [hp["st_out"] + hp["ec_out"], hp["fa_hidden"]]))
    out += [("fa.fc.w", [hp["fa_hidden"], 1]), ("fa.fc.b", [1])]
    return out


def forward(hp, t, win):
    n = win["gen"].shape[0]
    edges = win["edges"]
    a_norm = gcn_norm(n, edges)
    x = win["load_der"]
    for b in range(hp["st_blocks"]):
        p = "st%d." % b
        x = glu(x, t[p + "t1.w"], t[p + "t1.bw"], t[p + "t1.v"], t[p + "t1.bv"])
        x = np.stack([relu(a_norm @ xt @ t[p + "gcn.w"]) for xt in x])
        x = glu(x, t[p + "t2.w"], t[p + "t2.bw"], t[p + "t2.v"], t[p + "t2.bv"])
    flat = np.concatenate([x[s] for s in range(x.shape[0])], axis=1)
    s = relu(flat @ t["st.fc.w"] + t["st.fc.b"])
    e = win["gen"]
    for l in range(hp["ec_layers"]):
        p = "ec%d." % l
        net = (t[p + "h1.w"], t[p + "h1.b"], t[p + "h2.w"], t[p + "h2.b"])
        e = relu(ec_conv(e, edges, win["edge_attr"], t[p + "w"], net))
    e = relu(e @ t["ec.fc.w"] + t["ec.fc.b"])
    z = np.concatenate([s, e], axis=1)
    ws = [t["fa.cheb.w%d" % j] for j in range(1, hp["cheb_k"] + 1)]
    fa = relu(chebyshev(z, cheb_laplacian(n, edges), ws))
    node = (fa @ t["fa.fc.w"] + t["fa.fc.b"])[:, 0]
    return node[np.array(win["tder_node"], dtype=int)]


def write_model(out_dir, name, hp, tensors, norm):
    payload = bytearray()
    entries = []
    for tname, shape in specs(hp):
        arr = np.asarray(tensors[tname], dtype="<f4").reshape(shape)
        raw = arr.tobytes(order="C")
        entries.append({"name": tname, "shape": shape, "dtype": "f32", "offset": len(payload),
                        "crc32": zlib.crc32(raw) & 0xFFFFFFFF})
        payload += raw
    manifest = {"format": FORMAT, "version": VERSION, "payload": name + ".bin",
                "payload_bytes": len(payload), "hyperparameters": hp, "normalization": norm,
                "tensors": entries}
    with open(os.path.join(out_dir, name + ".bin"), "wb") as f:
        f.write(payload)
    with open(os.path.join(out_dir, name + ".json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def make_fixture(out_dir, name, hp, n, edges, tder_node, rng, scale):
    tensors = {}
    for tname, shape in specs(hp):
        w = rng.uniform(-scale, scale, size=shape)
        tensors[tname] = w.astype(np.float32).astype(np.float64)  # what the loader sees
    norm = {"load_der": {"mean": [0.0] * load_width(hp), "std": [1.0] * load_width(hp)},
            "gen": {"mean": [0.0] * gen_width(hp), "std": [1.0] * gen_width(hp)},
            "edge": {"mean": [0.0] * hp["edge_width"], "std": [1.0] * hp["edge_width"]}}
    write_model(out_dir, name, hp, tensors, norm)
    win = {"load_der": rng.normal(size=(hp["window"], n, load_width(hp))),
           "gen": rng.normal(size=(n, gen_width(hp))),
           "edges": edges,
           "edge_attr": rng.normal(size=(len(edges), hp["edge_width"])),
           "tder_node": tder_node}
    expected = forward(hp, tensors, win)
    doc = {"format": "rted-stgcn-fixture", "version": 1, "model": name + ".json", "tolerance": 1e-5,
           "window": {"load_der": win["load_der"].tolist(), "gen": win["gen"].tolist(),
                      "edges": [list(e) for e in edges], "edge_attr": win["edge_attr"].tolist(),
                      "tder_node": tder_node},
           "expected": expected.tolist()}
    with open(os.path.join(out_dir, name + "_window.json"), "w") as f:
        json.dump(doc, f)
        f.write("\n")


def layer_vectors(rng):
    out = {}
    h = rng.normal(size=(6, 4, 3))
    w, v = rng.normal(size=(3, 3, 5)), rng.normal(size=(3, 3, 5))
    bw, bv = rng.normal(size=5), rng.normal(size=5)
    out["glu"] = {"h": h.tolist(), "w": w.tolist(), "bw": bw.tolist(), "v": v.tolist(), "bv": bv.tolist(),
                  "out": glu(h, w, bw, v, bv).tolist()}
    edges = [[0, 1], [1, 2], [2, 3], [3, 0], [1, 3], [1, 3]]
    n = 5  # node 4 isolated
    h = rng.normal(size=(n, 3))
    w = rng.normal(size=(3, 4))
    out["gcn"] = {"nodes": n, "edges": edges, "h": h.tolist(), "w": w.tolist(),
                  "out": (gcn_norm(n, edges) @ h @ w).tolist()}
    attr = rng.normal(size=(len(edges), 4))
    net = (rng.normal(size=(4, 6)), rng.normal(size=6), rng.normal(size=(6, 12)), rng.normal(size=12))
    w = rng.normal(size=(3, 4))
    out["ec"] = {"nodes": n, "edges": edges, "h": h.tolist(), "attr": attr.tolist(), "w": w.tolist(),
                 "w1": net[0].tolist(), "b1": net[1].tolist(), "w2": net[2].tolist(), "b2": net[3].tolist(),
                 "out": ec_conv(h, edges, attr, w, net).tolist()}
    ws = [rng.normal(size=(3, 4)) for _ in range(3)]
    lhat = cheb_laplacian(n, edges)
    out["cheb"] = {"nodes": n, "edges": edges, "h": h.tolist(), "w": [x.tolist() for x in ws],
                   "out_k2": chebyshev(h, lhat, ws[:2]).tolist(), "out_k3": chebyshev(h, lhat, ws).tolist()}
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "fixtures", "stgcn"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    with open(os.path.join(args.out, "layers.json"), "w") as f:
        json.dump({"format": "rted-stgcn-layers", "version": 1, "layers": layer_vectors(rng)}, f)
        f.write("\n")

    small = {"window": 12, "kernel": 3, "st_blocks": 2, "st_channels": [8, 4, 8], "st_out": 6,
             "ec_layers": 2, "ec_channels": 5, "edge_hidden": 7, "ec_out": 4, "fa_hidden": 5,
             "cheb_k": 2, "bid_segments": 5, "tder_slots": 1, "gen_slots": 2, "dera_slots": 2,
             "edge_width": 4}
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3), (1, 3)]  # node 5 isolated, one parallel pair
    make_fixture(args.out, "small", small, 6, edges, [1, 2, 4, 5, 2], rng, 0.8)

    default = {"window": 12, "kernel": 3, "st_blocks": 2, "st_channels": [64, 16, 64], "st_out": 32,
               "ec_layers": 2, "ec_channels": 32, "edge_hidden": 32, "ec_out": 32, "fa_hidden": 32,
               "cheb_k": 2, "bid_segments": 5, "tder_slots": 1, "gen_slots": 1, "dera_slots": 1,
               "edge_width": 4}
    edges = [(i, (i + 1) % 10) for i in range(10)] + [(0, 5), (2, 7)]
    make_fixture(args.out, "default", default, 10, edges, [0, 3, 4, 8, 9, 6], rng, 0.3)


if __name__ == "__main__":
    main()
