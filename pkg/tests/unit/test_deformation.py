"""
Unit tests for geodesic distances, Jacobian models and the model set factory
"""

import math

import numpy as np
import pytest

from modelbandit import solver
from modelbandit.errors import ConfigError, DimensionError, DisconnectedGraphError, InputError
from modelbandit.models import (
    AdaptiveJacobianState,
    DiminishingRigidityParams,
    GeodesicDistanceMatrix,
    GripperPose,
    ObjectState,
    SensedState,
    WeightedLeastSquaresProblem,
)
from modelbandit.services.deformation import (
    AdaptiveJacobianModel,
    ConstantJacobianModel,
    DiminishingRigidityModel,
    ModelSetConfig,
    broyden_update,
    chain_edges,
    diminishing_rigidity_jacobian,
    geodesic_distance_matrix,
    gripper_distances,
    grid_edges,
    model_set_factory,
    noisy_constant_models,
)


def _line(count: int, spacing: float = 1.0) -> np.ndarray:
    points = np.zeros((count, 3))
    points[:, 0] = spacing * np.arange(count)
    return points


@pytest.mark.unit
class TestGeodesicDistances:
    def test_chain(self):
        D = geodesic_distance_matrix(_line(4), chain_edges(4, 1.0))
        assert D.D[0, 3] == pytest.approx(3.0)
        assert np.array_equal(D.D, D.D.T)
        assert np.all(np.diag(D.D) == 0)

    def test_default_lengths_are_euclidean(self):
        points = [[0, 0, 0], [3, 0, 0], [3, 4, 0]]
        D = geodesic_distance_matrix(points, [(0, 1), (1, 2)])
        assert D.D[0, 2] == pytest.approx(7.0)

    def test_shortcut_edge(self):
        points = [[0, 0, 0], [3, 0, 0], [3, 4, 0]]
        D = geodesic_distance_matrix(points, [(0, 1), (1, 2), (0, 2)])
        assert D.D[0, 2] == pytest.approx(5.0)

    def test_grid_edges(self):
        assert len(grid_edges(2, 3, 0.1)) == 7

    def test_grid_matches_floyd_warshall(self):
        rows = cols = 4
        spacing = 0.25
        points = np.array([[c * spacing, r * spacing, 0.0] for r in range(rows) for c in range(cols)])
        edges = grid_edges(rows, cols, spacing)
        size = rows * cols
        expected = np.full((size, size), np.inf)
        np.fill_diagonal(expected, 0.0)
        for i, j, length in edges:
            expected[i, j] = expected[j, i] = length
        for k in range(size):
            expected = np.minimum(expected, expected[:, k, None] + expected[None, k, :])
        assert np.array_equal(geodesic_distance_matrix(points, edges).D, expected)

    def test_disconnected_graph_names_components(self):
        with pytest.raises(DisconnectedGraphError) as excinfo:
            geodesic_distance_matrix(_line(4), [(0, 1, 1.0), (2, 3, 1.0)])
        assert excinfo.value.components == [[0, 1], [2, 3]]

    @pytest.mark.parametrize("edge", [(0, 5), (1, 1), (0, 1, -1.0)])
    def test_invalid_edges(self, edge):
        with pytest.raises(InputError):
            geodesic_distance_matrix(_line(3), [edge, (1, 2)])


@pytest.mark.unit
class TestDiminishingRigidity:
    def setup_method(self):
        self.points = ObjectState(_line(5, 0.1))
        self.D = geodesic_distance_matrix(self.points.points, chain_edges(5, 0.1))
        self.grippers = [GripperPose.at(self.points.points[0]), GripperPose.at(self.points.points[-1])]
        self.grasped = [[0], [4]]

    def test_shape(self):
        J = diminishing_rigidity_jacobian(DiminishingRigidityParams(10, 10), self.D, self.grippers,
                                          self.grasped, self.points)
        assert J.shape == (15, 12)

    def test_translation_weights_decay_with_distance(self):
        J = diminishing_rigidity_jacobian(DiminishingRigidityParams(10, 10), self.D, self.grippers,
                                          self.grasped, self.points)
        assert np.allclose(J[0:3, 0:3], np.eye(3))
        assert np.allclose(J[6:9, 0:3], math.exp(-10 * 0.2) * np.eye(3))
        assert np.allclose(J[12:15, 0:3], math.exp(-10 * 0.4) * np.eye(3))

    def test_rotation_block_is_rigid_at_zero_stiffness(self, rng):
        J = diminishing_rigidity_jacobian(DiminishingRigidityParams(0, 0), self.D, self.grippers,
                                          self.grasped, self.points)
        omega = rng.normal(size=3)
        qdot = np.concatenate([np.zeros(3), omega, np.zeros(6)])
        lever = self.points.points[3] - self.grippers[0].translation
        assert np.allclose(J[9:12] @ qdot, np.cross(omega, lever))

    def test_gripper_distances(self):
        distances = gripper_distances(self.D, self.grasped)
        assert np.allclose(distances[:, 0], [0.0, 0.1, 0.2, 0.3, 0.4])
        with pytest.raises(ConfigError):
            gripper_distances(self.D, [[0], []])

    def test_pose_and_grasp_counts_must_agree(self):
        with pytest.raises(DimensionError):
            diminishing_rigidity_jacobian(DiminishingRigidityParams(1, 1), self.D, self.grippers[:1],
                                          self.grasped, self.points)

    def test_model_needs_state(self):
        model = DiminishingRigidityModel(DiminishingRigidityParams(4, 8), self.D, self.grasped)
        assert model.name == "dr(k_trans=4,k_rot=8)"
        with pytest.raises(InputError):
            model.jacobian()
        state = SensedState(self.points, tuple(self.grippers))
        assert model.jacobian(state).shape == (15, 12)


@pytest.mark.unit
class TestBroyden:
    def test_full_rate_fits_secant(self, rng):
        J = rng.normal(size=(6, 4))
        qdot, observed = rng.normal(size=4), rng.normal(size=6)
        result = broyden_update(AdaptiveJacobianState(J, 1.0), qdot, observed)
        assert result.updated
        assert np.allclose(result.state.J_tilde @ qdot, observed, atol=1e-10)

    def test_partial_rate_moves_part_way(self, rng):
        J = rng.normal(size=(6, 4))
        qdot, observed = rng.normal(size=4), rng.normal(size=6)
        fitted = broyden_update(AdaptiveJacobianState(J, 0.25), qdot, observed).state
        assert np.allclose(fitted.J_tilde @ qdot - J @ qdot, 0.25 * (observed - J @ qdot))

    def test_zero_residual_is_a_no_op(self, rng):
        J = rng.normal(size=(6, 4))
        qdot = rng.normal(size=4)
        fitted = broyden_update(AdaptiveJacobianState(J, 0.5), qdot, J @ qdot).state
        assert np.allclose(fitted.J_tilde, J, atol=1e-12)

    def test_tiny_command_skips_update(self):
        state = AdaptiveJacobianState(np.eye(3), 1.0)
        result = broyden_update(state, np.full(3, 1e-8), np.ones(3))
        assert not result.updated
        assert result.state is state

    def test_adaptive_model_counts_skips(self):
        model = AdaptiveJacobianModel(AdaptiveJacobianState(np.eye(3), 0.1))
        assert model.name == "adaptive(gamma=1e-01)"
        assert not model.observe(np.zeros(3), np.ones(3))
        assert model.observe(np.ones(3), np.zeros(3))
        assert model.skipped_updates == 1

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            broyden_update(AdaptiveJacobianState(np.eye(3), 1.0), np.ones(2), np.ones(3))


@pytest.mark.unit
class TestConstantModels:
    def test_cached_command_matches_solver(self, rng):
        J = rng.normal(size=(9, 3))
        model = ConstantJacobianModel(J)
        delta, weights = rng.normal(size=9), rng.uniform(0.5, 1.5, 3)
        expected = solver.solve_ball_constrained_wls(WeightedLeastSquaresProblem(J, delta, weights, 0.1))
        assert np.allclose(model.command(delta, weights, 0.1), expected)
        model.command(rng.normal(size=9), weights, 0.1)
        assert len(model._forms) == 1

    def test_jacobian_is_read_only(self):
        model = ConstantJacobianModel(np.eye(3))
        with pytest.raises(ValueError):
            model.J[0, 0] = 2.0

    def test_noisy_copies(self, rng):
        J = np.vstack([np.eye(2), np.zeros((1, 2))])
        models = noisy_constant_models(J, 5, 0.025, rng)
        assert [m.name for m in models] == [f"constant[{i}]" for i in range(5)]
        for model in models:
            assert np.max(np.abs(model.J - J)) <= 0.025
        assert not np.array_equal(models[0].J, models[1].J)

    def test_command_length_checked(self):
        with pytest.raises(DimensionError):
            ConstantJacobianModel(np.eye(3)).command(np.ones(4), np.ones(4), 1.0)


@pytest.mark.unit
class TestModelSetFactory:
    def setup_method(self):
        points = ObjectState(_line(4, 0.1))
        self.D = geodesic_distance_matrix(points.points, chain_edges(4, 0.1))
        self.state = SensedState(points, (GripperPose.at(points.points[0]), GripperPose.at(points.points[-1])))
        self.grasped = [[0], [3]]

    def test_default_set_has_sixty_models_in_order(self):
        models = model_set_factory(ModelSetConfig(), self.D, self.grasped, self.state)
        assert len(models) == 60
        assert models[0].name == "dr(k_trans=0,k_rot=0)"
        assert models[1].name == "dr(k_trans=0,k_rot=4)"
        assert models[48].name == "dr(k_trans=24,k_rot=24)"
        rates = [m.state.learning_rate for m in models[49:]]
        assert rates == sorted(rates, reverse=True)
        assert rates[0] == 1.0

    def test_adaptive_models_start_from_the_seed_jacobian(self):
        config = ModelSetConfig(k_trans_grid=[0.0], k_rot_grid=[0.0], learning_rates=[0.5])
        adaptive = model_set_factory(config, self.D, self.grasped, self.state)[-1]
        seed = diminishing_rigidity_jacobian(DiminishingRigidityParams(10, 10), self.D,
                                             self.state.grippers, self.grasped, self.state.points)
        assert np.allclose(adaptive.jacobian(), seed)

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            model_set_factory(ModelSetConfig(k_trans_grid=[]), self.D, self.grasped, self.state)

    def test_synthetic_kind(self, rng):
        config = ModelSetConfig(kind="synthetic", synthetic_jacobian=np.ones((3, 2)), synthetic_count=4)
        assert len(model_set_factory(config, rng=rng)) == 4
        with pytest.raises(ConfigError):
            model_set_factory(config)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            model_set_factory(ModelSetConfig(kind="cloth"), self.D, self.grasped, self.state)

    def test_deformable_set_needs_geometry(self):
        with pytest.raises(ConfigError):
            model_set_factory(ModelSetConfig())

    def test_distance_matrix_must_be_square(self):
        with pytest.raises(DimensionError):
            GeodesicDistanceMatrix(np.zeros((2, 3)))

    @pytest.mark.parametrize("matrix", [
        [[0.0, -1.0], [-1.0, 0.0]],
        [[0.5, 1.0], [1.0, 0.0]],
        [[0.0, 1.0], [2.0, 0.0]],
        [[0.0, float("nan")], [float("nan"), 0.0]],
    ])
    def test_distance_matrix_invariants(self, matrix):
        with pytest.raises(InputError):
            GeodesicDistanceMatrix(matrix)
