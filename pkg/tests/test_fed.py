"""Federated rounds: sharding, masked aggregation, DP, client removal."""

import numpy as np
import pytest

from qmulab import fed, geo, learn, privacy


@pytest.fixture
def fed_state(small_template, moons):
    clients = fed.shard_clients(moons, 3, seed=5)
    return fed.FedState(
        template=small_template,
        theta=learn.init_params(small_template.n_params, 5),
        data=moons, clients=clients, server_lr=0.2,
        topology="star", master_seed=5)


class TestSharding:
    def test_disjoint_cover_of_train_split(self, moons):
        clients = fed.shard_clients(moons, 4, seed=1)
        all_idx = np.concatenate([c.indices for c in clients])
        assert len(all_idx) == len(set(all_idx))
        assert set(all_idx) == set(moons.train_indices())

    def test_deterministic(self, moons):
        a = fed.shard_clients(moons, 3, seed=2)
        b = fed.shard_clients(moons, 3, seed=2)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.indices, y.indices)

    def test_client_count_validated(self, moons):
        with pytest.raises(ValueError):
            fed.shard_clients(moons, 0, seed=1)


class TestMasks:
    @pytest.mark.parametrize("topology", ["star", "ring"])
    def test_masks_sum_to_zero(self, topology):
        ms = fed.make_masks([0, 1, 2, 3], 6, seed=9, topology=topology)
        total = sum(ms.masks.values())
        assert np.max(np.abs(total)) < 1e-9

    def test_unknown_topology(self):
        with pytest.raises(ValueError):
            fed.make_masks([0, 1], 2, seed=0, topology="mesh")

    def test_aggregate_equals_plain_sum(self):
        rng = np.random.default_rng(0)
        updates = {i: geo.GradVector(rng.standard_normal(4)) for i in range(3)}
        masks = fed.make_masks([0, 1, 2], 4, seed=1)
        total, messages = fed.secure_aggregate(updates, masks)
        plain = sum(u.values for u in updates.values())
        np.testing.assert_allclose(total.values, plain, atol=1e-9)
        # A masked message must hide the underlying update.
        assert not np.allclose(messages[0], updates[0].values)


class TestRounds:
    def test_round_is_deterministic(self, small_template, moons):
        def run():
            clients = fed.shard_clients(moons, 3, seed=5)
            st = fed.FedState(
                template=small_template,
                theta=learn.init_params(small_template.n_params, 5),
                data=moons, clients=clients, server_lr=0.2,
                topology="star", master_seed=5)
            dp = privacy.DPConfig(sigma=1.0)
            for _ in range(2):
                fed.fed_round(st, dp)
            return st
        a, b = run(), run()
        np.testing.assert_array_equal(a.theta.values, b.theta.values)
        assert [r.masked_digest for r in a.history] == [r.masked_digest for r in b.history]

    def test_ledger_grows_per_round(self, fed_state):
        dp = privacy.DPConfig(sigma=2.0)
        fed.fed_round(fed_state, dp)
        fed.fed_round(fed_state, dp)
        assert len(fed_state.ledger.rounds) == 2
        eps = [r.epsilon for r in fed_state.history]
        assert eps[1] >= eps[0]

    def test_flagged_calibration_warns(self, fed_state):
        dp = privacy.DPConfig(epsilon=2.0)  # >= 1, outside proof regime
        fed.fed_round(fed_state, dp)
        assert fed_state.ledger.warnings

    def test_needs_two_clients(self, small_template, moons):
        st = fed.FedState(
            template=small_template,
            theta=learn.init_params(small_template.n_params, 0),
            data=moons, clients=fed.shard_clients(moons, 2, seed=0),
            server_lr=0.1, topology="star", master_seed=0)
        st.removed.add(0)
        with pytest.raises(ValueError):
            fed.fed_round(st, privacy.DPConfig(sigma=1.0))


class TestClientUnlearn:
    def test_gradient_subtract_removes_client(self, fed_state):
        dp = privacy.DPConfig(sigma=0.5)
        fed.fed_round(fed_state, dp)
        before = fed_state.theta.values.copy()
        trace, _ = fed.unlearn_client(fed_state, 1, mode="gradient_subtract")
        assert 1 in fed_state.removed
        assert 1 not in {c.client_id for c in fed_state.active_clients()}
        assert not np.array_equal(fed_state.theta.values, before)
        assert len(trace.thetas) == 2

    def test_channel_mode_contracts_and_preserves_marginal(self, fed_state):
        dp = privacy.DPConfig(sigma=0.5)
        fed.fed_round(fed_state, dp)
        _, info = fed.unlearn_client(fed_state, 0, mode="channel")
        assert info["contracted"]
        assert info["marginal_preserved"]
        assert info["distance_after"] <= info["distance_before"] + 1e-9

    def test_double_removal_rejected(self, fed_state):
        fed.fed_round(fed_state, privacy.DPConfig(sigma=0.5))
        fed.unlearn_client(fed_state, 2)
        with pytest.raises(ValueError):
            fed.unlearn_client(fed_state, 2)

    def test_joint_demo_state_blocks(self, fed_state):
        rho, blocks = fed.build_joint_demo_state(fed_state)
        assert rho.n_qubits == 2 * len(blocks)
        assigned = [q for block in blocks.values() for q in block]
        assert sorted(assigned) == list(range(rho.n_qubits))
