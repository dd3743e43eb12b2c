import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from photon_rl.agents import ClipMemory
from photon_rl.memops import defrag_order, defragment, prune, record_reward, unprune
from photon_rl.mesh import IDEAL, NoiseSpec, leaf_distribution, sample_leaf


def trained(n_actions, seed):
    rng = np.random.default_rng(seed)
    mem = ClipMemory.fresh(n_actions)
    mem.chi[:] = rng.uniform(-3, 3, mem.chi.size)
    mem.write_phases(range(mem.chi.size))
    mem.cumulative_reward[:] = rng.exponential(1.0, n_actions)
    return mem


def test_record_reward():
    mem = ClipMemory.fresh(4)
    record_reward(mem, 2, 0.5)
    record_reward(mem, 2, 0.25)
    assert list(mem.cumulative_reward) == [0, 0, 0.75, 0]
    with pytest.raises(IndexError):
        record_reward(mem, 4, 1.0)


def test_defrag_moves_rewarded_actions_together():
    mem = ClipMemory.fresh(8)
    record_reward(mem, 7, 2.0)
    record_reward(mem, 0, 1.0)
    assert defrag_order(mem) == [7, 0, 1, 2, 3, 4, 5, 6]
    assert defragment(mem)
    assert list(mem.action_map) == [7, 0, 1, 2, 3, 4, 5, 6]
    # uniform tree stays uniform
    assert np.allclose(leaf_distribution(mem.tree), 1 / 8, atol=1e-12)


def test_defrag_is_a_no_op_when_sorted():
    mem = ClipMemory.fresh(4)
    chi = mem.chi.copy()
    assert not defragment(mem)
    record_reward(mem, 0, 1.0)
    assert not defragment(mem)
    assert np.array_equal(mem.chi, chi)


@given(st.integers(2, 32), st.integers(0, 2**32 - 1))
def test_defrag_keeps_each_action_probability(n_actions, seed):
    mem = trained(n_actions, seed)
    before = mem.action_probabilities()
    leaves_before = np.sort(leaf_distribution(mem.tree))
    defragment(mem)
    assert np.max(np.abs(mem.action_probabilities() - before)) <= 1e-12
    assert np.max(np.abs(np.sort(leaf_distribution(mem.tree)) - leaves_before)) <= 1e-12
    tallies = mem.cumulative_reward[mem.action_map[:n_actions]]
    assert np.all(np.diff(tallies) <= 0)


def test_defrag_under_noise_draws_fresh_phases():
    rng = np.random.default_rng(0)
    mem = trained(8, 1)
    target = mem.action_probabilities()
    defragment(mem, NoiseSpec(0.05), rng)
    ideal = mem.action_probabilities()
    assert np.allclose(ideal, target, atol=1e-12)
    assert not np.allclose(leaf_distribution(mem.tree), leaf_distribution(mem.ideal_tree))


def test_prune_forces_the_branch():
    mem = ClipMemory.fresh(8)
    prune(mem, 1, 1, "lower")
    rng = np.random.default_rng(0)
    assert all(sample_leaf(mem.tree, IDEAL, rng) >= 4 for _ in range(200))
    prune(mem, 2, 2, "upper")
    prune(mem, 3, 3, 1)
    assert {sample_leaf(mem.tree, IDEAL, rng) for _ in range(50)} == {5}
    unprune(mem, 3, 3)
    assert {sample_leaf(mem.tree, IDEAL, rng) for _ in range(200)} == {4, 5}


def test_pruned_nodes_stop_learning():
    from photon_rl.agents import ps_apply_reward, ps_glow_traverse

    mem = ClipMemory.fresh(4)
    prune(mem, 1, 1, "upper")
    ps_glow_traverse(mem, mem.topology.path(0))
    ps_apply_reward(mem, 1.0)
    assert mem.chi[0] == 0.0 and mem.chi[1] == 1.0


def test_prune_refuses_to_cut_every_action():
    mem = ClipMemory.fresh(6)  # leaves 6 and 7 unassigned
    prune(mem, 1, 1, "lower")
    with pytest.raises(ValueError):
        prune(mem, 2, 2, "lower")
    assert mem.override[2] == -1
    with pytest.raises(ValueError):
        prune(mem, 2, 2, "sideways")


def test_defrag_refuses_pruned_memory():
    mem = ClipMemory.fresh(4)
    prune(mem, 1, 1, 0)
    record_reward(mem, 3, 1.0)
    with pytest.raises(ValueError):
        defragment(mem)
