import os
import tempfile
import unittest

import pandas as pd
import torch
import torch.nn.functional as F

from ..common.errors import NonFiniteLossError
from . import test_utils
from .layer import (DTYPE, AdaptationTarget, LoraLayer, forward, init_layer,
                    merged_weight, param_count, param_report, random_layer)
from .train import (TOY_CONFIG, TrainConfig, grad_check, loss_and_gradients,
                    make_toy_dataset, random_sample, train_toy, write_grad_check_csv, write_loss_csv,
                    write_param_report_csv)


def _random_sample(d_in, d_out, seed):
    return random_sample(d_in, d_out, 10000 + seed)


class LayerTest(unittest.TestCase):
    def testParamCount(self):
        self.assertEqual(param_count(3, 4, 2)[0], 14)
        trainable, full, ratio = param_count(4096, 4096, 8)
        self.assertEqual(trainable, 65536)
        self.assertEqual(full, 16777216)
        self.assertAlmostEqual(ratio, 1 / 256)
        d = 16
        trainable, full, _ = param_count(d, d, d)
        self.assertEqual(trainable, 2 * d * d)
        self.assertGreaterEqual(trainable, full)
        with self.assertRaises(ValueError):
            param_count(0, 4, 2)

    def testParamCountBelowDenseWhenRankSmall(self):
        for d_in, d_out in [(3, 4), (8, 8), (16, 5), (64, 128)]:
            for r in range(1, d_in * d_out):
                if r < d_in * d_out / (d_in + d_out):
                    self.assertLess(param_count(d_in, d_out, r)[0], d_in * d_out)

    def testParamReport(self):
        rows = param_report(4096, 4096)
        self.assertEqual([row[0] for row in rows], [8, 16, 32, 64])
        self.assertEqual(rows[0][1], 65536)

    def testZeroAdaptationIsFrozenLayer(self):
        layer = init_layer(6, 4, 2, seed=3)
        torch.testing.assert_close(layer.B, torch.zeros(4, 2, dtype=DTYPE))
        x = torch.randn(6, dtype=DTYPE)
        torch.testing.assert_close(forward(layer, x), layer.W @ x)
        torch.testing.assert_close(merged_weight(layer), layer.W)

    def testIdentityComposition(self):
        d = 3
        eye = torch.eye(d, dtype=DTYPE)
        with self.assertRaises(ValueError):
            LoraLayer(torch.zeros(d, d, dtype=DTYPE), eye, eye)
        layer = LoraLayer(torch.zeros(d, d, dtype=DTYPE), eye.clone(), eye.clone(),
                          allow_full_rank=True)
        x = torch.tensor([1.5, -2.0, 0.25], dtype=DTYPE)
        torch.testing.assert_close(forward(layer, x), x)

    def testForwardMatchesHandMultiplication(self):
        layer = random_layer(3, 4, 2, seed=7)
        x = torch.tensor([0.3, -1.2, 2.0], dtype=DTYPE)
        W, A, B = layer.W.tolist(), layer.A.tolist(), layer.B.tolist()
        merged = [[W[i][j] + sum(B[i][k] * A[k][j] for k in range(2)) for j in range(3)]
                  for i in range(4)]
        expected = torch.tensor(
            [sum(merged[i][j] * x[j].item() for j in range(3)) for i in range(4)],
            dtype=DTYPE)
        torch.testing.assert_close(forward(layer, x), expected, rtol=1e-12, atol=1e-12)
        torch.testing.assert_close(merged_weight(layer) @ x, expected, rtol=1e-12, atol=1e-12)

    def testForwardBatchMatchesVectors(self):
        layer = random_layer(5, 4, 2, seed=1)
        X = torch.randn(6, 5, dtype=DTYPE)
        batch = forward(layer, X)
        for i in range(6):
            torch.testing.assert_close(batch[i], forward(layer, X[i]))

    def testForwardLinearity(self):
        layer = random_layer(8, 6, 3, seed=2)
        generator = torch.Generator().manual_seed(5)
        x = torch.randn(8, generator=generator, dtype=DTYPE)
        y = torch.randn(8, generator=generator, dtype=DTYPE)
        torch.testing.assert_close(forward(layer, x + y),
                                   forward(layer, x) + forward(layer, y),
                                   rtol=0, atol=1e-9)

    def testDimensionErrors(self):
        layer = random_layer(5, 4, 2, seed=0)
        with self.assertRaises(ValueError):
            forward(layer, torch.zeros(4, dtype=DTYPE))
        with self.assertRaises(ValueError):
            LoraLayer(torch.zeros(4, 5, dtype=DTYPE), torch.zeros(2, 4, dtype=DTYPE),
                      torch.zeros(4, 2, dtype=DTYPE))
        with self.assertRaises(ValueError):
            init_layer(5, 4, 4, seed=0)

    def testAdaptationTargets(self):
        self.assertEqual(len(AdaptationTarget), 2)
        self.assertEqual(AdaptationTarget.QKVO.layers,
                         ("q_proj", "k_proj", "v_proj", "o_proj"))
        self.assertIn("lm_head", AdaptationTarget.ALL_LINEAR.layers)
        self.assertIs(AdaptationTarget.parse("all_linear"), AdaptationTarget.ALL_LINEAR)
        self.assertIs(AdaptationTarget.parse(AdaptationTarget.QKVO), AdaptationTarget.QKVO)
        with self.assertRaises(ValueError):
            AdaptationTarget.parse("MLP")


class GradientTest(unittest.TestCase):
    def testGradCheckAcrossSeeds(self):
        for seed in range(100):
            layer = random_layer(5, 4, 2, seed)
            error = grad_check(layer, _random_sample(5, 4, seed))
            self.assertLess(error, 1e-5, "seed {}".format(seed))

    def testMaxRelativeErrorIsEntrywise(self):
        theoretical = torch.ones(100, 100, dtype=DTYPE)
        numerical = theoretical.clone()
        numerical[3, 7] = 1.001
        norm_error = ((theoretical - numerical).norm()
                      / (theoretical.norm() + numerical.norm())).item()
        self.assertLess(norm_error, 1e-5)
        self.assertGreater(test_utils.max_relative_error(theoretical, numerical), 1e-4)

    def testMaxRelativeErrorFloor(self):
        zeros = torch.zeros(3, 4, dtype=DTYPE)
        self.assertEqual(test_utils.max_relative_error(zeros, zeros), 0.0)
        noise = torch.full((3, 4), 1e-11, dtype=DTYPE)
        self.assertLess(test_utils.max_relative_error(zeros, noise), 1e-5)
        self.assertAlmostEqual(test_utils.max_relative_error(
            torch.tensor([2.0], dtype=DTYPE), torch.tensor([1.0], dtype=DTYPE)), 1 / 3)
        with self.assertRaises(ValueError):
            test_utils.max_relative_error(zeros, zeros.T)

    def testZeroInputGivesZeroGradient(self):
        layer = random_layer(5, 4, 2, seed=11)
        _, dA, dB = loss_and_gradients(layer, torch.zeros(1, 5, dtype=DTYPE),
                                       torch.tensor([2]))
        torch.testing.assert_close(dA, torch.zeros_like(dA))
        self.assertEqual(grad_check(layer, (torch.zeros(5, dtype=DTYPE), 2)), 0.0)

    def testDuplicateSampleGivesSameGradient(self):
        layer = random_layer(5, 4, 2, seed=12)
        x, label = _random_sample(5, 4, 12)
        X, y = x.unsqueeze(0), torch.tensor([label])
        first = loss_and_gradients(layer, X, y)
        second = loss_and_gradients(layer, X, y)
        for a, b in zip(first, second):
            self.assertTrue(torch.equal(a, b))

    def testAnalyticGradientsMatchAutograd(self):
        layer = random_layer(6, 3, 2, seed=4)
        X, y = make_toy_dataset(n_per_class=4, d_in=6, n_classes=3, seed=4)
        _, dA, dB = loss_and_gradients(layer, X, y)

        A = layer.A.clone().requires_grad_(True)
        B = layer.B.clone().requires_grad_(True)
        loss = F.cross_entropy(X @ (layer.W + B @ A).T, y)
        autograd_A = test_utils.get_analytical_jacobian(A, loss).reshape(dA.shape)
        autograd_B = test_utils.get_analytical_jacobian(B, loss).reshape(dB.shape)
        torch.testing.assert_close(dA, autograd_A)
        torch.testing.assert_close(dB, autograd_B)

        matches, message = test_utils.check_gradients_are_nearly_equal(
            dB, autograd_B, 1e-6, 0.0)
        self.assertTrue(matches, message)


class TrainTest(unittest.TestCase):
    def setUp(self):
        self.dataset = make_toy_dataset(seed=0)
        self.layer = init_layer(8, 3, TOY_CONFIG.rank, seed=TOY_CONFIG.seed)

    def testToyDataset(self):
        X, y = self.dataset
        self.assertEqual(list(X.shape), [60, 8])
        self.assertEqual(X.dtype, DTYPE)
        self.assertEqual(torch.bincount(y).tolist(), [20, 20, 20])

    def testWeightIsFrozen(self):
        before = self.layer.W.numpy().tobytes()
        result = train_toy(self.layer, self.dataset, TOY_CONFIG)
        self.assertEqual(self.layer.W.numpy().tobytes(), before)
        self.assertEqual(result.layer.W.numpy().tobytes(), before)
        self.assertTrue(torch.equal(self.layer.B, torch.zeros_like(self.layer.B)))

    def testLossHalves(self):
        result = train_toy(self.layer, self.dataset, TOY_CONFIG)
        self.assertEqual(len(result.losses), TOY_CONFIG.steps + 1)
        self.assertLess(result.final_loss, 0.5 * result.initial_loss)

    def testZeroLearningRate(self):
        config = TrainConfig(learning_rate=0.0, steps=10, rank=2, rank_grid=(1, 2))
        losses = train_toy(self.layer, self.dataset, config).losses
        self.assertEqual(len(set(losses)), 1)

    def testDeterministic(self):
        first = train_toy(init_layer(8, 3, 2, seed=1), self.dataset, TOY_CONFIG)
        second = train_toy(init_layer(8, 3, 2, seed=1), self.dataset, TOY_CONFIG)
        self.assertEqual(first.losses, second.losses)

    def testListDataset(self):
        X, y = self.dataset
        pairs = [(X[i], int(y[i])) for i in range(X.shape[0])]
        config = TrainConfig(learning_rate=0.2, steps=5, rank=2, rank_grid=(1, 2))
        self.assertEqual(train_toy(self.layer, pairs, config).losses,
                         train_toy(self.layer, self.dataset, config).losses)

    def testNonFiniteLossAborts(self):
        X, y = self.dataset
        X = X.clone()
        X[0, 0] = float("nan")
        with self.assertRaises(NonFiniteLossError):
            train_toy(self.layer, (X, y), TOY_CONFIG)

    def testConfigValidation(self):
        with self.assertRaises(ValueError):
            TrainConfig(rank=12)
        with self.assertRaises(ValueError):
            TrainConfig(steps=0)
        with self.assertRaises(ValueError):
            TrainConfig(learning_rate=-0.1)
        self.assertEqual(TrainConfig().rank, 8)

    def testCsvWriters(self):
        with tempfile.TemporaryDirectory() as tmp:
            write_loss_csv([1.0, 0.5], os.path.join(tmp, "loss.csv"))
            write_grad_check_csv([(0, 1e-9)], os.path.join(tmp, "grad_check.csv"))
            write_param_report_csv(param_report(3, 4, (1, 2)),
                                   os.path.join(tmp, "param_report.csv"))
            loss = pd.read_csv(os.path.join(tmp, "loss.csv"))
            self.assertEqual(list(loss.columns), ["step", "loss"])
            self.assertEqual(loss["step"].tolist(), [0, 1])
            report = pd.read_csv(os.path.join(tmp, "param_report.csv"))
            self.assertEqual(report["trainable"].tolist(), [7, 14])
            checks = pd.read_csv(os.path.join(tmp, "grad_check.csv"))
            self.assertEqual(list(checks.columns), ["seed", "max_rel_error"])


if __name__ == "__main__":
    unittest.main()
