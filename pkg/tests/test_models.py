import numpy as np
import pytest

from carenet import graph, models, nn, taxonomy
from carenet.graph import SimplifiedGraph
from carenet.synth import AccessLogEvent
from conftest import finite_difference_check, make_hcp, make_note, random_event_stream


def ev(hcp, note, action, t=0.0):
    return AccessLogEvent("p0", hcp, note, action, t)


def graph_with_gp(gp=True):
    specialty = "General Practice" if gp else "Dermatology"
    hcps = [make_hcp("H1", specialty=specialty), make_hcp("H2")]
    notes = [make_note("N1"), make_note("N2")]
    events = [
        ev("H1", "N1", "write", 0.0),
        ev("H2", "N1", "read", 1.0),
        ev("H2", "N2", "write", 2.0),
        ev("H1", "N2", "read", 3.0),
    ]
    return graph.build_graph("p0", events, hcps, notes)


def random_collab_graph(rng, max_nodes=20):
    n_hcps = int(rng.integers(2, max(3, max_nodes // 3)))
    n_notes = int(rng.integers(2, max(3, max_nodes - n_hcps)))
    events, hcps, notes = random_event_stream(rng, n_hcps=n_hcps, n_notes=n_notes)
    return graph.build_graph("p0", events, hcps, notes)


def zero_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


class TestArchitectureShapes:
    def test_collab_parameter_shapes(self):
        m = models.make_model("collab_only")
        p = m.init_params(0)
        assert p["sage0.W"].shape == (32, 2 * 131)
        for layer in (1, 2, 3):
            assert p[f"sage{layer}.W"].shape == (32, 64)
        assert p["head.W"].shape == (1, 128)  # 4 concatenated 32-wide outputs

    def test_combined_head_width_is_167(self):
        m = models.make_model("combined")
        assert m.init_params(0)["head.W"].shape == (1, 167)

    def test_comorbidity_head(self):
        m = models.make_model("comorbidity_only")
        assert m.init_params(0)["head.W"].shape == (1, 39)

    def test_attr_head(self):
        m = models.make_model("attr_only")
        assert m.init_params(0)["head.W"].shape == (1, 131)

    def test_topo_input_dim(self):
        m = models.make_model("topo_only")
        assert m.init_params(0)["sage0.W"].shape == (32, 4)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            models.make_model("gcn")


class TestPredict:
    def test_all_zero_params_give_half(self):
        g = graph_with_gp()
        comorb = np.zeros(39)
        sg = graph.simplify_to_hcp(g)
        cases = [
            ("collab_only", g),
            ("comorbidity_only", comorb),
            ("combined", (g, comorb)),
            ("attr_only", g),
            ("topo_only", sg),
        ]
        for kind, instance in cases:
            m = models.make_model(kind)
            p = zero_params(m.init_params(0))
            assert models.predict(m, p, instance) == 0.5

    def test_isomorphic_relabeling_same_probability(self):
        rng = np.random.default_rng(4)
        g = random_collab_graph(rng)
        m = models.make_model("collab_only")
        p = m.init_params(1)
        base = models.predict(m, p, g)
        # relabel node ids; canonical ordering changes but the graph is isomorphic
        mapping = {}
        for node in g.nodes:
            prefix = "zz" if rng.random() < 0.5 else "aa"
            mapping[node.node_id] = f"{prefix}-{node.node_id}"
        renamed_nodes = []
        for node in g.nodes:
            profile = node.profile
            if node.kind == graph.NOTE:
                profile = type(profile)(
                    note_id=mapping[node.node_id],
                    intent=profile.intent,
                    content=profile.content,
                    is_inpatient=profile.is_inpatient,
                )
            else:
                profile = type(profile)(
                    hcp_id=mapping[node.node_id],
                    title=profile.title,
                    hcp_type=profile.hcp_type,
                    specialty=profile.specialty,
                    is_resident=profile.is_resident,
                )
            renamed_nodes.append(graph.GraphNode(mapping[node.node_id], node.kind, profile))
        notes = sorted((n for n in renamed_nodes if n.kind == graph.NOTE), key=lambda n: n.node_id)
        hcps = sorted((n for n in renamed_nodes if n.kind == graph.HCP), key=lambda n: n.node_id)
        g2 = graph.CollabGraph(
            patient_id="p0",
            nodes=tuple(notes + hcps),
            edges=tuple(sorted((mapping[s], mapping[d]) for s, d in g.edges)),
            max_event_t=g.max_event_t,
        )
        assert abs(models.predict(m, p, g2) - base) < 1e-12

    def test_attr_only_gp_indicator_hand_example(self):
        m = models.make_model("attr_only")
        params = {"head.W": np.zeros((1, 131)), "head.b": np.zeros(1)}
        params["head.W"][0, taxonomy.GP_FEATURE] = 1.0
        with_gp = models.predict(m, params, graph_with_gp(True))
        without = models.predict(m, params, graph_with_gp(False))
        assert abs(with_gp - 1.0 / (1.0 + np.exp(-1.0))) < 1e-12  # sigma(1) = 0.731
        assert without == 0.5

    def test_empty_graph_predicts_from_zero_embedding(self):
        g = graph.build_graph("p0", [], {}, {})
        m = models.make_model("collab_only")
        p = m.init_params(0)
        expected = float(nn.sigmoid(np.asarray([p["head.b"][0]]))[0])
        assert models.predict(m, p, g) == expected

    def test_wrong_instance_kind_contract_error(self):
        g = graph_with_gp()
        with pytest.raises(models.ContractError):
            models.predict(models.make_model("collab_only"), {}, np.zeros(39))
        with pytest.raises(models.ContractError):
            models.predict(models.make_model("comorbidity_only"), {}, g)
        with pytest.raises(models.ContractError):
            models.predict(models.make_model("combined"), {}, g)
        with pytest.raises(models.ContractError):
            models.predict(models.make_model("topo_only"), {}, g)

    def test_topo_only_ignores_attributes(self):
        g1 = graph_with_gp(True)
        g2 = graph_with_gp(False)  # same topology, different specialty
        m = models.make_model("topo_only")
        p = m.init_params(3)
        p1 = models.predict(m, p, graph.simplify_to_hcp(g1))
        p2 = models.predict(m, p, graph.simplify_to_hcp(g2))
        assert p1 == p2

    def test_attr_only_invariant_to_rewiring(self):
        g = graph_with_gp(True)
        m = models.make_model("attr_only")
        p = m.init_params(5)
        base = models.predict(m, p, g)
        rewired = graph.CollabGraph(
            patient_id=g.patient_id,
            nodes=g.nodes,
            edges=(("H1", "N2"), ("N1", "H1")),  # different information flow
            max_event_t=g.max_event_t,
        )
        assert models.predict(m, p, rewired) == base


class TestReceptiveField:
    def path_graph(self, length=6):
        """Alternating directed path n0 -> h0 -> n1 -> h1 -> n2 -> h2."""
        hcps = [make_hcp(f"h{i}") for i in range(length // 2)]
        notes = [make_note(f"n{i}") for i in range((length + 1) // 2)]
        edges = []
        seq = []
        for i in range(length):
            seq.append(f"n{i//2}" if i % 2 == 0 else f"h{i//2}")
        for a, b in zip(seq, seq[1:]):
            edges.append((a, b))
        nodes = tuple(
            [graph.GraphNode(n.note_id, graph.NOTE, n) for n in notes]
            + [graph.GraphNode(h.hcp_id, graph.HCP, h) for h in hcps]
        )
        return graph.CollabGraph(
            patient_id="p0", nodes=nodes, edges=tuple(sorted(edges)), max_event_t=0.0
        )

    def test_four_hop_dependency_only(self):
        g = self.path_graph(6)  # n0->h0->n1->h1->n2->h2: h2 is 5 hops from n0
        m = models.make_model("collab_only")
        params = m.init_params(7)
        base = m.node_embeddings(g, params)
        idx = g.node_index()

        perturbed_profile = make_note("n0", intent=taxonomy.NOTE_INTENTS[4],
                                      content=taxonomy.NOTE_CONTENTS[7], is_inpatient=True)
        nodes = tuple(
            graph.GraphNode("n0", graph.NOTE, perturbed_profile) if n.node_id == "n0" else n
            for n in g.nodes
        )
        g2 = graph.CollabGraph("p0", nodes, g.edges, 0.0)
        emb = m.node_embeddings(g2, params)

        assert np.array_equal(emb[idx["h2"]], base[idx["h2"]])  # 5 hops: bitwise equal
        assert not np.array_equal(emb[idx["h1"]], base[idx["h1"]])  # within 4 hops

    def test_disconnected_node_never_influences(self):
        hcps = [make_hcp("h0"), make_hcp("h1")]
        notes = [make_note("n0"), make_note("n1")]
        nodes = tuple(
            [graph.GraphNode(n.note_id, graph.NOTE, n) for n in notes]
            + [graph.GraphNode(h.hcp_id, graph.HCP, h) for h in hcps]
        )
        g = graph.CollabGraph("p0", nodes, (("h0", "n0"),), 0.0)  # n1, h1 isolated
        m = models.make_model("collab_only")
        params = m.init_params(8)
        base = m.node_embeddings(g, params)
        idx = g.node_index()

        nodes2 = tuple(
            graph.GraphNode("n1", graph.NOTE, make_note("n1", is_inpatient=True))
            if n.node_id == "n1"
            else n
            for n in g.nodes
        )
        emb = m.node_embeddings(graph.CollabGraph("p0", nodes2, g.edges, 0.0), params)
        for nid in ("n0", "h0", "h1"):
            assert np.array_equal(emb[idx[nid]], base[idx[nid]])


def draw_instances(kind, rng, n=5, max_nodes=12):
    graphs = [random_collab_graph(rng, max_nodes=max_nodes) for _ in range(n)]
    if kind == "comorbidity_only":
        return [rng.integers(0, 2, size=39).astype(float) for _ in range(n)]
    if kind == "combined":
        return [(g, rng.integers(0, 2, size=39).astype(float)) for g in graphs]
    if kind == "topo_only":
        return [graph.simplify_to_hcp(g) for g in graphs]
    return graphs


class TestGradients:
    @pytest.mark.parametrize("kind", models.MODEL_KINDS)
    def test_finite_difference_all_variants(self, kind):
        from conftest import randomized_params, smooth_instance_batch

        rng = np.random.default_rng(sum(map(ord, kind)))
        m = models.make_model(kind, hidden_dim=8)
        for trial in range(3):
            params = randomized_params(m, rng)
            batch = smooth_instance_batch(m, kind, rng, params, draw_instances)
            y = rng.integers(0, 2, size=1).astype(float)
            w = rng.uniform(0.5, 2.0, size=1)

            logits, cache = m.forward(batch, params)
            _, dlogits = nn.bce_with_logits(logits, y, w)
            grads = m.backward(cache, dlogits)
            assert set(grads) == set(params)

            def loss_fn(p):
                lg, _ = m.forward(batch, p)
                loss, _ = nn.bce_with_logits(lg, y, w)
                return float(loss)

            finite_difference_check(loss_fn, params, grads, rng, entries_per_tensor=5)


class TestTraining:
    def test_deterministic_histories(self):
        rng = np.random.default_rng(21)
        X = [rng.integers(0, 2, size=39).astype(float) for _ in range(30)]
        y = (np.array([x[0] for x in X]) > 0.5).astype(float)
        if y.min() == y.max():  # ensure both classes
            y[0] = 1 - y[0]
        hp = models.Hyperparams(epochs=30, patience=10)
        m = models.make_model("comorbidity_only")
        r1 = models.train(m, X, y, hp, seed=5)
        r2 = models.train(m, X, y, hp, seed=5)
        assert r1.history == r2.history
        for k in r1.params:
            assert np.array_equal(r1.params[k], r2.params[k])

    def test_best_so_far_val_loss_non_increasing(self):
        rng = np.random.default_rng(22)
        X = [rng.normal(size=39) for _ in range(40)]
        y = rng.integers(0, 2, size=40).astype(float)
        hp = models.Hyperparams(epochs=50, patience=50, lr=0.05)
        res = models.train(models.make_model("comorbidity_only"), X, y, hp, seed=1)
        best = np.inf
        bests = []
        for h in res.history:
            best = min(best, h["val_loss"])
            bests.append(best)
        assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(bests, bests[1:]))
        assert res.best_val_loss == min(h["val_loss"] for h in res.history)

    def test_linearly_separable_toy_reaches_perfect_accuracy(self):
        # the GP attribute perfectly predicts the label
        instances = [graph_with_gp(i % 2 == 0) for i in range(24)]
        y = np.array([i % 2 == 0 for i in range(24)], dtype=float)
        hp = models.Hyperparams(lr=0.05, epochs=200, patience=200, val_fraction=0.1)
        m = models.make_model("attr_only")
        res = models.train(m, instances, y, hp, seed=2)
        batch = m.batch(m.prepare(instances), range(len(instances)))
        acc = ((models.predict_batch(m, res.params, batch) >= 0.5) == (y > 0.5)).mean()
        assert acc == 1.0

    def test_single_class_raises(self):
        X = [np.zeros(39) for _ in range(10)]
        with pytest.raises(models.DegenerateDataError):
            models.train(
                models.make_model("comorbidity_only"),
                X,
                np.ones(10),
                models.Hyperparams(),
                seed=0,
            )

    def test_empty_training_set_raises(self):
        with pytest.raises(models.DegenerateDataError):
            models.train(
                models.make_model("comorbidity_only"), [], [], models.Hyperparams(), seed=0
            )

    def test_planted_breast_cohort_holdout_accuracy(self, planted_cohort_and_graphs):
        cohort, graphs = planted_cohort_and_graphs
        pats = [p for p in cohort.patients if p.cancer_type == "breast"]
        y = np.array([p.survived for p in pats], dtype=float)
        insts = [graphs[p.patient_id] for p in pats]
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(pats))
        test, train = perm[:40], perm[40:]
        hp = models.Hyperparams(lr=0.01, epochs=150, patience=25)
        m = models.make_model("collab_only")
        res = models.train(m, [insts[i] for i in train], y[train], hp, seed=0)
        batch = m.batch(m.prepare([insts[i] for i in test]), range(len(test)))
        acc = ((models.predict_batch(m, res.params, batch) >= 0.5) == (y[test] > 0.5)).mean()
        assert acc >= 0.80

    def test_checkpoint_restores_bit_identical_predictions(self, tmp_path):
        rng = np.random.default_rng(30)
        g = random_collab_graph(rng)
        m = models.make_model("collab_only")
        params = m.init_params(4)
        before = models.predict(m, params, g)
        nn.save_params(tmp_path / "c.json", params, meta={"model_kind": m.kind})
        loaded, _ = nn.load_params(tmp_path / "c.json")
        assert models.predict(m, loaded, g) == before
