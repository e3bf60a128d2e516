import pytest
import torch

from ampprune.exceptions import InfeasibleRatioError
from ampprune.models import build_config, count_params, forward, init_weights
from ampprune.pruning import (
    ImportanceReport, PruningPlan, per_layer_count, build_plan, apply_plan, achieved_ratio,
    save_plan, load_plan, compute_importance
)
from ampprune.utils import fingerprint, serialize


def uniform_report(config, value=1.):
    heads = [[value] * config.n_heads for _ in range(config.n_layers)]
    mlp = [[value] * config.d_intermediate for _ in range(config.n_layers)]
    return ImportanceReport('fp', 1, 1, heads, mlp)


def ramp_report(config):
    """Scores increase with index, so amp removes the lowest indices."""
    heads = [[float(n) for n in range(config.n_heads)] for _ in range(config.n_layers)]
    mlp = [[float(m) for m in range(config.d_intermediate)] for _ in range(config.n_layers)]
    return ImportanceReport('fp', 1, 1, heads, mlp)


@pytest.mark.parametrize('n_items, fraction, expected', [
    (32, 0.30, 10),
    (11008, 0.30, 3302),
    (4, 0.25, 1),
    (4, 0.125, 1),
    (4, 0.1, 0),
    (4, 0.99, 3),
    (1, 0.5, 0),
    (86, 0., 0),
])
def test_per_layer_count(n_items, fraction, expected):
    assert per_layer_count(n_items, fraction) == expected


def test_per_layer_count_rejects_bad_fraction():
    with pytest.raises(ValueError):
        per_layer_count(4, 1.)
    with pytest.raises(ValueError):
        per_layer_count(4, -0.1)


def test_amp_removes_lowest_scores(tiny_config):
    plan = build_plan(ramp_report(tiny_config), 0.25, tiny_config)
    assert plan.heads == [[0], [0]]
    assert plan.mlp == [list(range(22)), list(range(22))]


def test_reversed_removes_highest_scores(tiny_config):
    plan = build_plan(ramp_report(tiny_config), 0.25, tiny_config, strategy='reversed')
    assert plan.heads == [[3], [3]]
    assert plan.mlp == [list(range(64, 86))] * 2


def test_ties_remove_lower_index_first(tiny_config):
    plan = build_plan(uniform_report(tiny_config), 0.5, tiny_config)
    assert plan.heads == [[0, 1], [0, 1]]
    plan = build_plan(uniform_report(tiny_config), 0.5, tiny_config, strategy='reversed')
    assert plan.heads == [[0, 1], [0, 1]]


def test_random_plan_is_seeded(tiny_config):
    report = uniform_report(tiny_config)
    a = build_plan(report, 0.3, tiny_config, strategy='random', seed=5)
    b = build_plan(report, 0.3, tiny_config, strategy='random', seed=5)
    c = build_plan(report, 0.3, tiny_config, strategy='random', seed=6)
    assert a.heads == b.heads and a.mlp == b.mlp
    assert (a.heads, a.mlp) != (c.heads, c.mlp)
    assert [len(m) for m in a.mlp] == [26, 26]
    assert a.seed == 5


def test_random_needs_seed(tiny_config):
    with pytest.raises(ValueError):
        build_plan(uniform_report(tiny_config), 0.3, tiny_config, strategy='random')


def test_unknown_strategy_and_basis(tiny_config):
    with pytest.raises(KeyError):
        build_plan(uniform_report(tiny_config), 0.3, tiny_config, strategy='magnitude')
    with pytest.raises(KeyError):
        build_plan(uniform_report(tiny_config), 0.3, tiny_config, basis='global')


def test_zero_ratio_plan_is_empty(tiny_config):
    plan = build_plan(ramp_report(tiny_config), 0., tiny_config)
    assert plan.is_empty()
    assert plan.achieved_overall_ratio == 0.


def test_keep_one_clamp(tiny_config):
    plan = build_plan(ramp_report(tiny_config), 0.99, tiny_config)
    assert plan.pruned_dims() == [(1, 1), (1, 1)]


def test_per_layer_ratio_one_is_infeasible(tiny_config):
    with pytest.raises(InfeasibleRatioError):
        build_plan(ramp_report(tiny_config), 1., tiny_config)


def test_overall_basis_hits_target(tiny_config):
    plan = build_plan(ramp_report(tiny_config), 0.2, tiny_config, basis='overall')
    assert plan.ratio_basis == 'overall'
    assert abs(plan.achieved_overall_ratio - 0.2) < 0.05


def test_overall_basis_accepts_hyphen(tiny_config):
    plan = build_plan(ramp_report(tiny_config), 0.1, tiny_config, basis='per-layer')
    assert plan.ratio_basis == 'per_layer'


def test_overall_ratio_above_max_is_infeasible(tiny_config):
    # one head and one MLP pair survive in every layer
    total, prunable = count_params(tiny_config)
    with pytest.raises(InfeasibleRatioError) as e:
        build_plan(ramp_report(tiny_config), prunable / total, tiny_config, basis='overall')
    assert e.value.max_ratio < prunable / total


def test_mlp_ratio_separates_fractions(tiny_config):
    plan = build_plan(ramp_report(tiny_config), 0.5, tiny_config, mlp_ratio=0.)
    assert plan.heads == [[0, 1], [0, 1]]
    assert plan.mlp == [[], []]
    with pytest.raises(ValueError):
        build_plan(ramp_report(tiny_config), 0.1, tiny_config, basis='overall', mlp_ratio=0.1)


def test_plan_layer_mismatch(tiny_config):
    with pytest.raises(ValueError):
        build_plan(ramp_report(tiny_config), 0.3, build_config('toy'))


def test_plan_validation(tiny_config):
    dims = [(4, 86), (4, 86)]
    with pytest.raises(ValueError):
        PruningPlan('amp', 'per_layer', 0.3, None, [[0, 1, 2, 3], []], [[], []], dims, tiny_config)
    with pytest.raises(ValueError):
        PruningPlan('amp', 'per_layer', 0.3, None, [[4], []], [[], []], dims, tiny_config)
    with pytest.raises(ValueError):
        PruningPlan('amp', 'per_layer', 0.3, None, [[1, 1], []], [[], []], dims, tiny_config)


def test_apply_plan_shapes_and_ratio(tiny_weights):
    plan = build_plan(ramp_report(tiny_weights.config), 0.25, tiny_weights.config)
    pruned = apply_plan(tiny_weights, plan)
    assert pruned.layer_dims() == [(3, 64), (3, 64)]
    layer, source = pruned.layers[0], tiny_weights.layers[0]
    assert torch.equal(layer.Wq, source.Wq[:, 8:])
    assert torch.equal(layer.Wo, source.Wo[8:])
    assert torch.equal(layer.Wgate, source.Wgate[:, 22:])
    assert torch.equal(layer.Wdown, source.Wdown[22:])
    assert achieved_ratio(tiny_weights, pruned) == pytest.approx(plan.achieved_overall_ratio)
    total, _ = count_params(tiny_weights.config)
    assert achieved_ratio(tiny_weights, pruned) == pytest.approx(1. - pruned.num_params() / total)
    assert achieved_ratio(tiny_weights, pruned, exclude_embeddings=True) > \
        achieved_ratio(tiny_weights, pruned)


def test_apply_plan_leaves_input_untouched(tiny_weights):
    before = serialize(tiny_weights)
    plan = build_plan(ramp_report(tiny_weights.config), 0.5, tiny_weights.config)
    apply_plan(tiny_weights, plan)
    assert serialize(tiny_weights) == before


def test_zero_ratio_is_bit_identical(tiny_weights, calib_samples):
    report = compute_importance(tiny_weights, calib_samples)
    pruned = apply_plan(tiny_weights, build_plan(report, 0., tiny_weights.config))
    assert fingerprint(pruned) == fingerprint(tiny_weights)
    tokens = calib_samples[1]
    assert torch.equal(forward(pruned, tokens), forward(tiny_weights, tokens))


def test_pruned_heads_match_removed_contributions(tiny_weights, calib_samples):
    """Removing a head equals subtracting its contribution in the first layer."""
    plan = build_plan(ramp_report(tiny_weights.config), 0.25, tiny_weights.config, mlp_ratio=0.)
    pruned = apply_plan(tiny_weights, plan)
    from ampprune.models import mha_decomposed, mha_standard, rms_norm
    c = tiny_weights.config
    x = tiny_weights.token_embedding[calib_samples[0]]
    a = rms_norm(x, tiny_weights.layers[0].attn_norm, c.rms_norm_eps)
    full, contribs = mha_decomposed(a, tiny_weights.layers[0])
    reduced = mha_standard(a, pruned.layers[0])
    assert torch.allclose(reduced, full - contribs[0], atol=1e-5)


def test_apply_plan_rejects_other_model(tiny_weights):
    plan = build_plan(ramp_report(tiny_weights.config), 0.25, tiny_weights.config)
    pruned = apply_plan(tiny_weights, plan)
    with pytest.raises(ValueError):
        apply_plan(pruned, plan)


def test_plan_file_round_trip(tiny_config, tmp_path):
    plan = build_plan(ramp_report(tiny_config), 0.3, tiny_config, strategy='random', seed=2)
    fpath = str(tmp_path / 'plan.json')
    save_plan(plan, fpath)
    loaded = load_plan(fpath)
    assert loaded.to_dict() == plan.to_dict()
    assert loaded.config == tiny_config


def test_pruned_model_still_generates(tiny_weights):
    from ampprune.models import generate
    plan = build_plan(ramp_report(tiny_weights.config), 0.5, tiny_weights.config)
    pruned = apply_plan(tiny_weights, plan)
    assert len(generate(pruned, [1, 2, 3], 8)) == 8


def test_report_dims_must_match(tiny_config):
    report = uniform_report(tiny_config)
    with pytest.raises(ValueError):
        report.check_dims([(4, 86), (3, 86)])
    report.check_dims([(4, 86), (4, 86)])


def test_toy_preset_counts():
    config = build_config('toy')
    total, prunable = count_params(config)
    assert total == init_weights(config).num_params()
    assert prunable == 4 * (4 * 128 * 128 + 3 * 128 * 344)


@pytest.mark.parametrize('ratio', [0.25, 0.5])
def test_amp_and_reversed_plans_are_disjoint(tiny_weights, calib_samples, ratio):
    report = compute_importance(tiny_weights, calib_samples)
    config = tiny_weights.config
    amp = build_plan(report, ratio, config)
    rev = build_plan(report, ratio, config, strategy='reversed')
    for i in range(config.n_layers):
        for scores, removed, other in ((report.head_scores[i], amp.heads[i], rev.heads[i]),
                                       (report.mlp_scores[i], amp.mlp[i], rev.mlp[i])):
            assert len(set(scores.tolist())) == scores.numel()
            assert not set(removed) & set(other)
            kept = [j for j in range(scores.numel()) if j not in removed]
            assert scores[removed].max() <= scores[kept].min()


def test_achieved_ratio_grows_with_fraction(tiny_weights):
    report = ramp_report(tiny_weights.config)
    ratios = [achieved_ratio(tiny_weights,
                             apply_plan(tiny_weights, build_plan(report, f, tiny_weights.config)))
              for f in (0., 0.1, 0.25, 0.4, 0.5, 0.7)]
    assert ratios[0] == 0.
    assert ratios == sorted(ratios)
    assert ratios[-1] > ratios[1]
