import numpy as np
import pytest
import torch

from ttnet.nn import conv_grouped, dual_step, dual_step_zone, pgd_attack, selu, ste_binarize

# [PAPER] Example block weights and outcomes.  The reference text lists the
# row 5..7 dot products as (-5, 3, -2), repeating rows 1..3; the actual
# values for inputs 0101/0110/0111 with these weights are (-6, 2, -3).
# Both lists binarize to the same table, which is what downstream uses.
W1 = [10.0, -1.0, 3.0, -5.0]
PRE_ACTS = [0, -5, 3, -2, -1, -6, 2, -3, 10, 5, 13, 8, 9, 4, 12, 7]
BINARIZED = [0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1]


def test_conv_golden_preactivations():
    # each 4-bit row presented as its own stride-aligned patch
    rows = torch.tensor([[[(r >> (3 - j)) & 1 for j in range(4)]]
                         for r in range(16)], dtype=torch.float32)
    w = torch.tensor([[W1]], dtype=torch.float32)
    out = conv_grouped(rows, w, None, stride=2, dims=1)
    assert out.shape == (16, 1, 1)
    assert out.flatten().tolist() == PRE_ACTS


def test_binarize_golden():
    y = ste_binarize(torch.tensor(PRE_ACTS, dtype=torch.float32))
    assert y.tolist() == BINARIZED


def test_binarize_boundary():
    x = torch.tensor([-1e-12, 0.0, 1e-12])
    assert ste_binarize(x).tolist() == [0.0, 0.0, 1.0]


def test_ste_backward_clip():
    x = torch.tensor([0.5, 2.0, -0.3, -1.5, 1.0], requires_grad=True)
    ste_binarize(x).sum().backward()
    assert x.grad.tolist() == [1.0, 0.0, 1.0, 0.0, 1.0]


def test_conv_identity_1x1():
    x = torch.randn(2, 3, 7)
    w = torch.eye(3).reshape(3, 3, 1)
    out = conv_grouped(x, w, None, stride=1, dims=1)
    assert torch.equal(out, x)


def test_conv_grouped_matches_naive():
    # [DERIVED] brute-force direct convolution oracle
    torch.manual_seed(0)
    x = torch.randn(2, 3, 11)
    w = torch.randn(3, 1, 5)  # groups=3
    out = conv_grouped(x, w, None, stride=2, groups=3, dims=1)
    n_out = (11 - 5) // 2 + 1
    for b in range(2):
        for c in range(3):
            for t in range(n_out):
                ref = sum(float(x[b, c, t * 2 + k]) * float(w[c, 0, k])
                          for k in range(5))
                assert abs(float(out[b, c, t]) - ref) < 1e-5


def test_selu_values_and_grad():
    assert float(selu(torch.tensor(0.0))) == 0.0
    assert abs(float(selu(torch.tensor(1.0))) - 1.0507) < 1e-3
    x = torch.tensor(-0.5, dtype=torch.float64, requires_grad=True)
    selu(x).backward()
    h = 1e-5
    fd = (float(selu(torch.tensor(-0.5 + h, dtype=torch.float64))) -
          float(selu(torch.tensor(-0.5 - h, dtype=torch.float64)))) / (2 * h)
    assert abs(float(x.grad) - fd) / abs(fd) < 1e-4


def test_dual_step_eval_is_deterministic():
    x = torch.linspace(-2, 2, 101)
    a = dual_step(x, t=1.0, training=False)
    b = dual_step(x, t=1.0, training=False)
    assert torch.equal(a, b)
    assert torch.equal(a, ste_binarize(x))


def test_dual_step_endpoints_and_noise():
    t = 2.0
    x = torch.tensor([t, -t, t / 2, -t / 2])
    y = dual_step(x, t, training=True)
    assert y.tolist() == [1.0, 0.0, 1.0, 0.0]
    gen = torch.Generator().manual_seed(1)
    samples = dual_step(torch.zeros(10_000), t, training=True, generator=gen)
    assert 0.45 <= float(samples.mean()) <= 0.55
    assert set(samples.tolist()) == {0.0, 1.0}


def test_dual_step_zone():
    z = dual_step_zone(torch.tensor([0.0, 0.9, 1.0, -0.99, 3.0]), t=2.0)
    assert z.tolist() == [True, True, False, True, False]
    assert not dual_step_zone(torch.tensor([0.0]), t=0.0).any()


def test_pgd_trivial():
    lin = torch.nn.Linear(4, 2)
    x = torch.rand(3, 4)
    y = torch.tensor([0, 1, 0])
    assert torch.equal(pgd_attack(lin, x, y, eps=0.0, steps=5, step_size=0.1), x)
    assert torch.equal(pgd_attack(lin, x, y, eps=0.1, steps=0, step_size=0.1), x)


def test_pgd_stays_in_ball_and_range():
    torch.manual_seed(0)
    lin = torch.nn.Linear(4, 2)
    x = torch.rand(8, 4)
    y = torch.randint(0, 2, (8,))
    adv = pgd_attack(lin, x, y, eps=0.1, steps=10, step_size=0.05)
    assert float((adv - x).abs().max()) <= 0.1 + 1e-6
    assert float(adv.min()) >= 0 and float(adv.max()) <= 1
