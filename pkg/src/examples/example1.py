"""
Example 1: Training a rank-2 adapter on a frozen random layer.
"""

import os
import argparse

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ..lora import init_layer, make_toy_dataset, train_toy
from ..lora.train import TOY_CONFIG, TrainConfig, TOY_RANK_GRID

current_dir = os.path.dirname(os.path.realpath(__file__))
data_dir = os.path.join(current_dir, '.')

if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument('-o', '--filename_output', type=str, default=os.path.join(data_dir, 'example1.png'))
    parser.add_argument('--steps', type=int, default=TOY_CONFIG.steps)
    args = parser.parse_args()

    # 3 well-separated classes of 20 points in 8 dimensions
    X, y = make_toy_dataset(seed=0)

    curves = {}
    for rank in TOY_RANK_GRID:
        config = TrainConfig(learning_rate=TOY_CONFIG.learning_rate, steps=args.steps,
                             rank=rank, seed=0, rank_grid=TOY_RANK_GRID)
        # W is random and frozen, B starts at zero so step 0 is the frozen layer
        layer = init_layer(X.shape[1], 3, rank, seed=0)
        result = train_toy(layer, (X, y), config)
        curves[rank] = result.losses
        print("rank {}: loss {:.4f} -> {:.4f}".format(rank, result.initial_loss, result.final_loss))

    for rank, losses in curves.items():
        plt.plot(np.arange(len(losses)), np.array(losses), label="r = {}".format(rank))
    plt.xlabel("step")
    plt.ylabel("cross-entropy")
    plt.legend()
    plt.savefig(args.filename_output)
