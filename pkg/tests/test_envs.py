import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from photon_rl.envs import (
    ACTIONS,
    FactorizedBandit,
    FlatTwoArmBandit,
    GridSpec,
    GridWorld3D,
    ProtocolError,
    bandit_step_factorized,
    bandit_step_flat,
    gridworld_step,
    lambda_tables,
    min_path_length,
)


def test_default_grid_shortest_path():
    assert min_path_length(GridSpec()) == 19


def test_moves_and_boundaries():
    spec = GridSpec()
    assert gridworld_step(spec, (3, 1, 4), 0) == ((4, 1, 4), 0.0, False)
    assert gridworld_step(spec, (3, 1, 4), 3) == ((3, 1, 4), 0.0, False)  # y- off the grid
    assert gridworld_step(spec, (9, 9, 8), 4) == ((9, 9, 9), 8.0, True)
    with pytest.raises(IndexError):
        gridworld_step(spec, (1, 1, 1), 6)


def test_walls_block_and_lengthen_paths():
    spec = GridSpec(dims=(3, 3, 1), start=(1, 1, 1), goal=(3, 1, 1), walls={(2, 1, 1)})
    assert gridworld_step(spec, (1, 1, 1), 0)[0] == (1, 1, 1)
    assert min_path_length(spec) == 4


def test_unreachable_goal_is_rejected():
    spec = GridSpec(dims=(3, 1, 1), start=(1, 1, 1), goal=(3, 1, 1), walls={(2, 1, 1)})
    with pytest.raises(ValueError):
        min_path_length(spec)


@pytest.mark.parametrize(
    "kw",
    [
        {"dims": (0, 2, 2)},
        {"start": (11, 1, 1)},
        {"goal": (1, 1, 1), "walls": {(1, 1, 1)}},
        {"walls": {(0, 1, 1)}},
        {"max_steps": 0},
    ],
)
def test_invalid_grids(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


def test_random_walls_are_seeded():
    a = GridSpec.with_random_walls(0.2, seed=5)
    b = GridSpec.with_random_walls(0.2, seed=5)
    assert a.walls == b.walls and len(a.walls) > 0
    assert a.start not in a.walls and a.goal not in a.walls


def test_encode_decode():
    spec = GridSpec(dims=(4, 3, 2), start=(1, 1, 1), goal=(4, 3, 2))
    cells = [spec.decode(i) for i in range(spec.n_cells)]
    assert len(set(cells)) == spec.n_cells
    assert all(spec.encode(c) == i for i, c in enumerate(cells))


def test_episode_cap_and_protocol():
    env = GridWorld3D(GridSpec(max_steps=5))
    with pytest.raises(ProtocolError):
        env.step(0)
    env.reset()
    for i in range(5):
        _, reward, done = env.step(3)
    assert done and reward == 0.0
    with pytest.raises(ProtocolError):
        env.step(0)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=60))
def test_tables_agree_with_step(actions):
    spec = GridSpec(dims=(3, 3, 3), start=(1, 1, 1), goal=(3, 3, 3), walls={(2, 2, 2), (1, 2, 1)})
    env = GridWorld3D(spec)
    tables = env.tables()
    s = env.reset()
    for a in actions:
        nxt, r, done = env.step(a)
        assert nxt == tables.next_state[s, a]
        assert r == tables.reward[s, a]
        if r:
            assert tables.terminal[s, a]
        s = nxt
        if done:
            break


def test_flat_bandit():
    env = FlatTwoArmBandit(3, 8, reward=0.025)
    assert env.n_actions == 8
    assert [bandit_step_flat(a, 3, 8) for a in range(8)] == [0.025] + [0.0] * 6 + [0.025]
    assert env.reset() == 0
    assert env.step(0) == (0, 0.025, True)
    with pytest.raises(ProtocolError):
        env.step(0)
    with pytest.raises(ValueError):
        FlatTwoArmBandit(3, 9)
    with pytest.raises(ValueError):
        FlatTwoArmBandit(3, 1)


def test_bandit_tables_are_single_step():
    t = FlatTwoArmBandit(2, 2).tables()
    assert t.n_states == 1 and t.max_steps == 1
    assert t.terminal.all()


def test_lambda_tables():
    l1, l2, l3 = lambda_tables(0.5, 1.0)
    assert np.allclose(l1, [0.95, 0.05]) and np.allclose(l3, [0.05, 0.95])
    assert np.allclose(l2, np.array([0, 0.25, 1, 0.25]) / 1.5)
    assert np.allclose(lambda_tables(0.0, 0.004)[1], 0.004 * np.array([0, 0, 1, 1]) / 2)
    with pytest.raises(ValueError):
        lambda_tables(1.5)


def test_factorized_layout_and_rewards():
    env = FactorizedBandit.with_mixing(0.25, epsilon=1.0)
    assert env.sizes == (2, 4, 2)
    assert env.n_actions == 16
    assert env.decompose(0) == (0, 0, 0)
    assert env.decompose(1) == (0, 0, 1)
    assert env.decompose(15) == (1, 3, 1)
    tables = lambda_tables(0.25, 1.0)
    for a in range(16):
        sub = env.decompose(a)
        assert env.compose(sub) == a
        assert env.rewards[a] == pytest.approx(sum(t[i] for t, i in zip(tables, sub)))


def test_factorized_product_combination():
    tables = [np.array([1.0, 2.0]), np.array([3.0, 4.0])]
    assert bandit_step_factorized((1, 1), tables, "product") == 8.0
    assert bandit_step_factorized((1, 0), tables, "sum") == 5.0
    with pytest.raises(ValueError):
        bandit_step_factorized((1,), tables)
    with pytest.raises(IndexError):
        bandit_step_factorized((2, 0), tables)
    with pytest.raises(ValueError):
        bandit_step_factorized((0, 0), tables, "max")


def test_action_set():
    assert len(ACTIONS) == 6
    assert all(sum(abs(c) for c in move) == 1 for move in ACTIONS)
