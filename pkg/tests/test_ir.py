import json

import pytest
from hypothesis import given, settings, strategies as st

from darviz import ir
from darviz.ir import (
    CycleDetected,
    DuplicateId,
    InvalidLayer,
    Layer,
    Model,
    ParseError,
    SelfLoop,
    TensorShape,
    UnknownId,
    UnknownKind,
    UnsupportedVersion,
    layer,
)


class TestLayerConstruction:
    def test_bad_id_rejected(self):
        for bad in ("", "a b", "x!", "ümlauts"):
            with pytest.raises(InvalidLayer):
                layer(bad, "Flatten")

    def test_unknown_kind(self):
        with pytest.raises(UnknownKind):
            layer("x", "LSTM")

    def test_wrong_params_class(self):
        with pytest.raises(InvalidLayer):
            Layer("x", "Conv2D", ir.DenseParams(units=4))

    def test_scalar_pairs_normalize(self):
        conv = layer("c", "Conv2D", filters=8, kernel=3, stride=2)
        assert conv.params.kernel == (3, 3)
        assert conv.params.stride == (2, 2)
        assert conv.params.pad == (0, 0)

    def test_name_defaults_to_id(self):
        assert layer("c1", "Flatten").name == "c1"
        assert layer("c1", "Flatten", name="block one").name == "block one"

    def test_activation_fn_checked(self):
        with pytest.raises(InvalidLayer):
            layer("a", "Activation", fn="gelu")

    def test_unknown_param_field(self):
        with pytest.raises(InvalidLayer):
            layer("c", "Conv2D", filters=8, kernel=3, dilation=2)


class TestModelConstruction:
    def test_duplicate_id(self):
        with pytest.raises(DuplicateId):
            Model(layers=(layer("a", "Flatten"), layer("a", "Flatten")))

    def test_edge_to_unknown_layer(self):
        with pytest.raises(UnknownId):
            Model(layers=(layer("a", "Flatten"),), edges=frozenset([("a", "ghost")]))

    def test_self_loop_rejected(self):
        with pytest.raises(SelfLoop):
            Model(layers=(layer("a", "Flatten"),), edges=frozenset([("a", "a")]))

    def test_cycles_are_representable(self):
        m = Model(
            layers=(layer("a", "Flatten"), layer("b", "Flatten")),
            edges=frozenset([("a", "b"), ("b", "a")]),
        )
        assert ir.find_cycle(m)

    def test_neighbor_queries_sorted(self):
        m = Model(
            layers=(layer("a", "Flatten"), layer("b", "Flatten"), layer("c", "Concat")),
            edges=frozenset([("b", "c"), ("a", "c")]),
        )
        assert m.predecessors("c") == ["a", "b"]
        assert m.successors("a") == ["c"]


class TestGraphOps:
    def chain(self):
        return Model(
            layers=(layer("a", "Input"), layer("b", "Flatten"), layer("c", "Flatten")),
            edges=frozenset([("a", "b"), ("b", "c")]),
        )

    def test_add_layer(self):
        m = ir.add_layer(self.chain(), layer("d", "Flatten"))
        assert "d" in m.layer_map()
        with pytest.raises(DuplicateId):
            ir.add_layer(m, layer("d", "Flatten"))

    def test_remove_layer_drops_edges(self):
        m = ir.remove_layer(self.chain(), "b")
        assert "b" not in m.layer_map()
        assert m.edges == frozenset()

    def test_remove_layer_rewire_bridges(self):
        m = ir.remove_layer(self.chain(), "b", rewire=True)
        assert m.edges == frozenset([("a", "c")])

    def test_connect_disconnect(self):
        m = ir.connect(self.chain(), "a", "c")
        assert ("a", "c") in m.edges
        m = ir.disconnect(m, "a", "c")
        assert ("a", "c") not in m.edges
        with pytest.raises(UnknownId):
            ir.connect(m, "a", "ghost")

    def test_ops_do_not_mutate(self):
        m = self.chain()
        ir.remove_layer(m, "b")
        ir.set_metadata(m, "k", "v")
        assert len(m.layers) == 3
        assert m.metadata == {}


class TestTopoOrder:
    def test_forward_edges_and_lex_tiebreak(self):
        m = Model(
            layers=(layer("z", "Input"), layer("a", "Input"), layer("m", "Concat")),
            edges=frozenset([("z", "m"), ("a", "m")]),
        )
        assert ir.topo_order(m) == ["a", "z", "m"]

    def test_cycle_raises_with_members(self):
        m = Model(
            layers=(layer("a", "Flatten"), layer("b", "Flatten"), layer("c", "Input")),
            edges=frozenset([("a", "b"), ("b", "a"), ("c", "a")]),
        )
        with pytest.raises(CycleDetected) as exc:
            ir.topo_order(m)
        assert set(exc.value.cycle) == {"a", "b"}

    def test_serialization_order_covers_cyclic_graphs(self):
        m = Model(
            layers=(layer("a", "Flatten"), layer("b", "Flatten")),
            edges=frozenset([("a", "b"), ("b", "a")]),
        )
        assert sorted(ir.serialization_order(m)) == ["a", "b"]
        assert ir.serialization_order(m) == ir.serialization_order(m)

    def test_reachable_from_inputs(self):
        m = Model(
            layers=(layer("in", "Input"), layer("x", "Flatten"), layer("orphan", "Flatten")),
            edges=frozenset([("in", "x")]),
        )
        assert ir.reachable_from_inputs(m) == {"in", "x"}


def demo_model():
    return Model(
        name="demo",
        layers=(
            layer("in", "Input"),
            layer("c1", "Conv2D", filters=8, kernel=3, pad=1),
            layer("a1", "Activation", fn="relu"),
            layer("p1", "MaxPool2D", kernel=2, stride=2),
            layer("flat", "Flatten"),
            layer("fc", "Dense", units=10),
        ),
        edges=frozenset(
            [("in", "c1"), ("c1", "a1"), ("a1", "p1"), ("p1", "flat"), ("flat", "fc")]
        ),
        metadata={"input_shape.in": "28x28x1", "learning_rate": "0.001"},
    )


class TestSerialization:
    def test_round_trip_preserves_structure(self):
        m = demo_model()
        again = ir.parse_ir(ir.serialize_ir(m))
        assert ir.structurally_equal(m, again)

    def test_serialization_is_canonical(self):
        m = demo_model()
        text = ir.serialize_ir(m)
        assert text == ir.serialize_ir(ir.parse_ir(text))
        assert text.endswith("\n")
        doc = json.loads(text)
        assert [l["id"] for l in doc["layers"]] == ["in", "c1", "a1", "p1", "flat", "fc"]
        assert doc["edges"] == sorted(doc["edges"])

    def test_layer_order_does_not_matter(self):
        m = demo_model()
        reversed_layers = Model(
            name=m.name, layers=tuple(reversed(m.layers)), edges=m.edges, metadata=m.metadata
        )
        assert ir.serialize_ir(m) == ir.serialize_ir(reversed_layers)

    def test_unknown_top_level_field_rejected(self):
        doc = ir.model_to_document(demo_model())
        doc["extra"] = True
        with pytest.raises(ParseError):
            ir.document_to_model(doc)

    def test_unknown_layer_field_rejected(self):
        doc = ir.model_to_document(demo_model())
        doc["layers"][0]["position"] = [1, 2]
        with pytest.raises(ParseError):
            ir.document_to_model(doc)

    def test_format_and_version_checked(self):
        doc = ir.model_to_document(demo_model())
        bad = dict(doc, format="other")
        with pytest.raises(ParseError):
            ir.document_to_model(bad)
        bad = dict(doc, version=2)
        with pytest.raises(UnsupportedVersion):
            ir.document_to_model(bad)

    def test_malformed_json_carries_position(self):
        with pytest.raises(ParseError) as exc:
            ir.parse_ir('{"format": "darviz-ir",\n  version')
        assert exc.value.line == 2

    def test_bad_edges_rejected(self):
        doc = ir.model_to_document(demo_model())
        doc["edges"] = [["in"]]
        with pytest.raises(ParseError):
            ir.document_to_model(doc)

    def test_metadata_must_be_string_map(self):
        doc = ir.model_to_document(demo_model())
        doc["metadata"] = {"k": 5}
        with pytest.raises(ParseError):
            ir.document_to_model(doc)

    def test_unknown_kind_in_document(self):
        doc = ir.model_to_document(demo_model())
        doc["layers"][0]["kind"] = "Recurrent"
        with pytest.raises(UnknownKind):
            ir.document_to_model(doc)


# Random DAG strategy: forward edges over a shuffled id list can never
# produce a cycle, so these models always serialize and re-parse.
_KIND_BUILDERS = [
    ("Input", {}),
    ("Conv2D", {"filters": 4, "kernel": 3, "pad": 1}),
    ("MaxPool2D", {"kernel": 2, "stride": 2}),
    ("Dense", {"units": 16}),
    ("Flatten", {}),
    ("Dropout", {"rate": 0.5}),
    ("BatchNorm", {}),
    ("Activation", {"fn": "relu"}),
    ("Concat", {}),
    ("Add", {}),
    ("Softmax", {}),
]


@st.composite
def random_models(draw):
    n = draw(st.integers(min_value=1, max_value=12))
    picks = draw(st.lists(st.sampled_from(_KIND_BUILDERS), min_size=n, max_size=n))
    layers = tuple(layer(f"n{i}", kind, **params) for i, (kind, params) in enumerate(picks))
    edges = set()
    for j in range(1, n):
        for i in range(j):
            if draw(st.booleans()):
                edges.add((f"n{i}", f"n{j}"))
    metadata = draw(
        st.dictionaries(
            st.text(alphabet="abcdefgh_", min_size=1, max_size=8),
            st.text(max_size=12),
            max_size=3,
        )
    )
    name = draw(st.text(alphabet="abcdefghij-_", min_size=1, max_size=10))
    return Model(name=name, layers=layers, edges=frozenset(edges), metadata=metadata)


class TestSerializationProperties:
    @given(random_models())
    @settings(max_examples=150, deadline=None)
    def test_round_trip(self, model):
        again = ir.parse_ir(ir.serialize_ir(model))
        assert ir.structurally_equal(model, again)

    @given(random_models())
    @settings(max_examples=60, deadline=None)
    def test_deterministic_bytes(self, model):
        assert ir.serialize_ir(model) == ir.serialize_ir(model)


class TestIsomorphism:
    def test_relabeled_model_is_isomorphic(self):
        m = demo_model()
        renames = {l.id: f"x_{l.id}" for l in m.layers}
        relabeled = Model(
            name="other",
            layers=tuple(
                Layer(renames[l.id], l.kind, l.params, name="renamed") for l in m.layers
            ),
            edges=frozenset((renames[a], renames[b]) for a, b in m.edges),
        )
        assert ir.graph_isomorphic(m, relabeled)

    def test_param_change_breaks_isomorphism(self):
        m = demo_model()
        changed = Model(
            name=m.name,
            layers=tuple(
                layer(l.id, "Dense", units=11) if l.id == "fc" else l for l in m.layers
            ),
            edges=m.edges,
        )
        assert not ir.graph_isomorphic(m, changed)

    def test_edge_move_breaks_isomorphism(self):
        m = demo_model()
        rewired = Model(
            name=m.name,
            layers=m.layers,
            edges=(m.edges - {("flat", "fc")}) | {("a1", "fc")},
        )
        assert not ir.graph_isomorphic(m, rewired)

    def test_symmetric_branches_resolve(self):
        def branchy(prefix):
            return Model(
                layers=(
                    layer(f"{prefix}in", "Input"),
                    layer(f"{prefix}a", "Conv2D", filters=8, kernel=1),
                    layer(f"{prefix}b", "Conv2D", filters=8, kernel=1),
                    layer(f"{prefix}cat", "Concat"),
                ),
                edges=frozenset(
                    [
                        (f"{prefix}in", f"{prefix}a"),
                        (f"{prefix}in", f"{prefix}b"),
                        (f"{prefix}a", f"{prefix}cat"),
                        (f"{prefix}b", f"{prefix}cat"),
                    ]
                ),
            )

        assert ir.graph_isomorphic(branchy("l_"), branchy("r_"))


class TestShapeMetadata:
    def test_per_layer_binding(self):
        m = demo_model()
        bound = ir.input_bindings_from_metadata(m)
        assert bound == {"in": TensorShape((28, 28, 1))}

    def test_bare_key_binds_single_input(self):
        m = Model(
            layers=(layer("in", "Input"),),
            metadata={"input_shape": "8x8x3"},
        )
        assert ir.input_bindings_from_metadata(m)["in"].dims == (8, 8, 3)

    def test_bind_input_shape_writes_metadata(self):
        m = Model(layers=(layer("in", "Input"),))
        m = ir.bind_input_shape(m, "in", TensorShape((32, 32, 1)))
        assert m.metadata["input_shape.in"] == "32x32x1"

    def test_parse_shape_errors(self):
        with pytest.raises(ir.IrError):
            ir.parse_shape("axb")
