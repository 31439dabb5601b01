#!/usr/bin/env python3
# Copyright 2026 The biotune Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Plot heatmap.csv from a biotune run: one row per top-k configuration,
one column per block, colour = effective rate multiplier (0 = frozen)."""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from matplotlib.colors import LogNorm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("heatmap", help="heatmap.csv of a run")
    ap.add_argument("-o", "--output", default="heatmap.png")
    args = ap.parse_args()

    df = pd.read_csv(args.heatmap)
    blocks = df.columns[2:]
    eta = df[blocks].to_numpy(dtype=float)
    # Frozen blocks are drawn grey; the log scale covers the weight range.
    masked = np.ma.masked_where(eta == 0.0, eta)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("lightgrey")

    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(blocks)), 1.2 + 0.45 * len(df)))
    im = ax.imshow(masked, cmap=cmap, norm=LogNorm(vmin=0.1, vmax=10), aspect="auto")
    ax.set_xticks(range(len(blocks)), blocks, rotation=60, ha="right")
    ax.set_yticks(range(len(df)), [f"#{r} (id {g})" for r, g in zip(df["rank"], df["genotype_id"])])
    fig.colorbar(im, ax=ax, label="rate multiplier (grey = frozen)")
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()
