import numpy as np
import torch

import pytest

from ttnet.logic import qmc_minimize
from ttnet.model import (
    FinalLayerSpec,
    LttBlockSpec,
    PreprocessSpec,
    TrainConfig,
    TtnetModel,
    train,
)
from ttnet.tables import BlockGeom, CompiledModel, TruthTable, compile_model
from ttnet.rules import (
    edit_rules,
    evaluate_rules,
    evaluation_report,
    instantiate_rules,
    rule_dot,
    rules_report,
    total_complexity,
    total_gates,
)

GOLDEN = np.array([0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1],
                  dtype=np.uint8)
# [PAPER] the 6-feature running example
FEATURES = ["Age>34", "Male", "Go to University", "Married",
            "Born in the US", "Born in France"]


def golden_compiled(entries=GOLDEN, names=FEATURES):
    t = TruthTable(4, entries.copy(), (entries == 1).astype(np.uint8))
    return CompiledModel("x0-msb", False, None, None, None, None, None,
                         [BlockGeom(1, 1, 1, (4,), (2,), 1)], [[t]],
                         np.array([[3, -3], [1, 2]], dtype=np.int64).T.copy(),
                         np.array([0, 0], dtype=np.int64), names)


def test_instantiate_golden_rules():
    cm = golden_compiled()
    rules = instantiate_rules(cm, input_len=6)
    assert len(rules) == 2
    # [PAPER] Rule1 = (GoToUniversity & ~Married) | Age>34
    assert rules[0].to_string() == \
        "(Go to University&~Married) | Age>34"
    # [PAPER] Rule2 = (BornUS & ~BornFrance) | GoToUniversity
    assert rules[1].to_string() == \
        "(Born in the US&~Born in France) | Go to University"


def test_hk_rule_golden():
    # [PAPER] with BornUS/BornFrance mutually exclusive the second patch's
    # table frees rows 3,7,11,15 and the rule collapses to a disjunction
    from ttnet.tables import inject_dcts
    t = TruthTable(4, GOLDEN.copy(), GOLDEN.copy())
    hk = inject_dcts(t, [[2, 3]])  # patch positions of the one-hot pair
    cover = qmc_minimize(hk.entries, "dnf")
    names = ["Go to University", "Married", "Born in the US",
             "Born in France"]
    s = cover.to_string(names)
    assert s in ("Born in the US | Go to University",
                 "Go to University | Born in the US")


def test_stride_equals_length_single_rule():
    cm = golden_compiled()
    cm.blocks[0] = BlockGeom(1, 1, 1, (4,), (4,), 1)
    cm.w_tilde = cm.w_tilde[:, :1].copy()
    rules = instantiate_rules(cm, input_len=4)
    assert len(rules) == 1 and rules[0].patch == 0


def trained_setup(seed=0):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, (400, 1, 12)).astype(np.float32)
    y = (x[:, 0, 0].astype(int) & x[:, 0, 1].astype(int))
    blk = LttBlockSpec(dims=1, in_channels=1, hidden_channels=6,
                       out_channels=4, kernel=3, stride=3)
    m = TtnetModel(PreprocessSpec(features=1), [blk],
                   FinalLayerSpec(16, 2),
                   feature_names=[f"f{j}" for j in range(12)])
    train(m, x, y, TrainConfig(lr=0.01, epochs=3, seed=seed))
    cm, _ = compile_model(m)
    return m, cm, x, y


def test_rule_set_fidelity():
    # [DERIVED] rule evaluation == lut_infer on every sample, zero tolerance
    m, cm, x, y = trained_setup()
    rules = instantiate_rules(cm, input_len=12)
    bits = cm.binarize_input(x).reshape(len(x), -1)
    logits = evaluate_rules(rules, cm.b_tilde, bits)
    assert np.array_equal(logits, cm.logits(x))
    assert np.array_equal(logits.argmax(1), cm.predict(x))


def test_complexity_and_gates():
    cm = golden_compiled()
    rules = instantiate_rules(cm, input_len=6)
    # each rule is (a&~b)|c: 3 literals, 2 gates
    assert total_complexity(rules) == 6
    assert total_gates(rules) == 4


def test_report_and_dot():
    cm = golden_compiled()
    rules = instantiate_rules(cm, input_len=6)
    rep = rules_report(rules)
    assert "rule 0" in rep and "Age>34" in rep and "points" in rep
    dot = rule_dot(rules[0])
    assert dot.startswith("digraph") and "Age>34" in dot


def test_edit_add_rule_and_revert():
    m, cm, x, y = trained_setup()
    rules = instantiate_rules(cm, input_len=12)
    bits = cm.binarize_input(x).reshape(len(x), -1)
    base = evaluate_rules(rules, cm.b_tilde, bits)
    name_to_bit = {f"f{j}": j for j in range(12)}
    edited = edit_rules(rules, ["add-rule points=5,-5 expr=(f0&~f1)|f2"],
                        name_to_bit, classes=2)
    assert len(edited) == len(rules) + 1
    assert edited[-1].origin == "human"
    after = evaluate_rules(edited, cm.b_tilde, bits)
    assert not np.array_equal(base, after)
    # revert: drop the human rule -> bit-identical logits
    reverted = [r for r in edited if r.origin == "model"]
    assert np.array_equal(evaluate_rules(reverted, cm.b_tilde, bits), base)


def test_edit_delete_condition_constant_true():
    cm = golden_compiled(entries=np.array([0] * 8 + [1] * 8, dtype=np.uint8))
    rules = instantiate_rules(cm, input_len=6)
    # rule is the single literal x0; deleting it makes the rule constant 1
    name_to_bit = {n: i for i, n in enumerate(FEATURES)}
    edited = edit_rules(rules, ["delete-condition rule=0 clause=0 lit=Age>34"],
                        name_to_bit, classes=2)
    bits = np.zeros((4, 6), dtype=np.uint8)
    assert (edited[0].fires(bits) == 1).all()
    assert (rules[0].fires(bits) == 0).all()  # original untouched


def test_edit_modify_condition():
    cm = golden_compiled()
    rules = instantiate_rules(cm, input_len=6)
    name_to_bit = {n: i for i, n in enumerate(FEATURES)}
    edited = edit_rules(
        rules, ["modify-condition rule=0 clause=1 old=Age>34 new=~Male"],
        name_to_bit, classes=2)
    bits = np.zeros((1, 6), dtype=np.uint8)
    bits[0, 0] = 1  # Age>34 set, Male unset
    assert rules[0].fires(bits)[0] == 1
    assert edited[0].fires(bits)[0] == 1  # ~Male also fires
    bits[0, 1] = 1  # now Male set
    assert edited[0].fires(bits)[0] == 0


def test_edit_unknown_feature_errors():
    cm = golden_compiled()
    rules = instantiate_rules(cm, input_len=6)
    with pytest.raises(ValueError, match="unknown feature"):
        edit_rules(rules, ["add-rule points=1,0 expr=NoSuchThing"],
                   {n: i for i, n in enumerate(FEATURES)}, classes=2)


def test_evaluation_report():
    m, cm, x, y = trained_setup()
    rules = instantiate_rules(cm, input_len=12)
    bits = cm.binarize_input(x).reshape(len(x), -1)
    rep = evaluation_report(rules, cm.b_tilde, bits, y)
    lut_acc = float((cm.predict(x) == y).mean())
    assert rep["accuracy"] == lut_acc and rep["count"] == 400
