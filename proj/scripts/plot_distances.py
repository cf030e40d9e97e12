# Copyright 2026 The bnleak Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Per-layer histograms of member and non-member BN distances.

usage: plot_distances.py <stage1 dir>/plot_data.csv out.png
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def main(argv):
    if len(argv) != 3:
        sys.exit(__doc__)
    data = pd.read_csv(argv[1])
    panels = list(data.groupby(["layer_id", "statistic"], sort=False))
    cols = 4
    rows = (len(panels) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3 * rows), squeeze=False)
    for ax, ((layer, stat), frame) in zip(axes.flat, panels):
        for label, part in frame.groupby("label"):
            ax.hist(part["distance"], bins=40, alpha=0.5, density=True, label=label)
        ax.set_title(f"{layer} ({stat})", fontsize=8)
        ax.legend(fontsize=7)
    for ax in axes.flat[len(panels):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(argv[2], dpi=120)


if __name__ == "__main__":
    main(sys.argv)
