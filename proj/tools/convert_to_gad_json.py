#!/usr/bin/env python3
"""Convert a molecular benchmark into the graph JSON read by `gad train`.

Output is newline-delimited JSON, one graph per line:

    {"num_nodes": 5, "edges": [[0, 1], [1, 2], ...],
     "node_features": [[f0, f1, ...], ...], "target": 0.37}

Edges are undirected; listing each pair once is enough. Every node needs at
least one edge. `target` may be a list for multi-target regression.

Only the torch_geometric ZINC and QM9 loaders are wired up. Edge attributes
are dropped. Atom types are one-hot encoded for ZINC; QM9 keeps its 11
float node features. Anything else: emit the same record shape yourself.
"""

import argparse
import json
import sys


def record(num_nodes, edge_index, features, target):
    edges = sorted({(min(u, v), max(u, v)) for u, v in zip(*edge_index) if u != v})
    return {"num_nodes": int(num_nodes), "edges": [list(e) for e in edges],
            "node_features": features, "target": target}


def zinc(root, split, subset):
    from torch_geometric.datasets import ZINC
    data = ZINC(root, subset=subset, split=split)
    width = int(max(int(g.x.max()) for g in data)) + 1
    for g in data:
        x = [[1.0 if c == int(a) else 0.0 for c in range(width)] for a in g.x.view(-1).tolist()]
        yield record(g.num_nodes, g.edge_index.tolist(), x, float(g.y.item()))


def qm9(root, target):
    from torch_geometric.datasets import QM9
    for g in QM9(root):
        yield record(g.num_nodes, g.edge_index.tolist(), g.x.tolist(), float(g.y[0, target]))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("dataset", choices=["zinc", "qm9"])
    p.add_argument("--root", default="data")
    p.add_argument("--split", default="train", help="zinc only")
    p.add_argument("--full", action="store_true", help="zinc: full 250k set instead of the 12k subset")
    p.add_argument("--target", type=int, default=0, help="qm9 target column")
    p.add_argument("--out", default="-")
    args = p.parse_args()
    try:
        graphs = zinc(args.root, args.split, not args.full) if args.dataset == "zinc" else qm9(args.root, args.target)
        out = sys.stdout if args.out == "-" else open(args.out, "w")
        skipped = 0
        for rec in graphs:
            degree = [0] * rec["num_nodes"]
            for u, v in rec["edges"]:
                degree[u] += 1
                degree[v] += 1
            if 0 in degree:  # isolated atoms are rejected by the loader
                skipped += 1
                continue
            out.write(json.dumps(rec) + "\n")
        if skipped:
            print(f"skipped {skipped} graphs with isolated nodes", file=sys.stderr)
    except ImportError:
        sys.exit("torch_geometric is required for this converter")


if __name__ == "__main__":
    main()
