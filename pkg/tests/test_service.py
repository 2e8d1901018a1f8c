import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from darviz import ir, linting, shapes, store, zoo
from darviz.backends import codegen
from darviz.service import create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(store_dir=str(tmp_path / "designs"))
    with TestClient(app) as c:
        yield c


def lenet_doc():
    return ir.model_to_document(zoo.zoo_get("lenet5"))


def broken_doc():
    model = zoo.zoo_get("lenet5")
    doc = ir.model_to_document(model)
    for entry in doc["layers"]:
        if entry["kind"] == "Dense":
            entry["kind"] = "Dropout"
            entry["params"] = {"rate": 1.5}
            break
    return doc


class TestZooEndpoints:
    def test_listing(self, client):
        resp = client.get("/api/zoo")
        assert resp.status_code == 200
        entries = resp.json()
        assert [e["name"] for e in entries] == zoo.zoo_names()
        assert all({"description", "input_shape", "layers"} <= set(e) for e in entries)

    def test_fetch_one(self, client):
        resp = client.get("/api/zoo/lenet5")
        assert resp.status_code == 200
        model = ir.document_to_model(resp.json())
        assert ir.structurally_equal(model, zoo.zoo_get("lenet5"))

    def test_unknown_name_is_404(self, client):
        assert client.get("/api/zoo/resnet").status_code == 404


class TestCatalog:
    def test_every_kind_listed(self, client):
        resp = client.get("/api/catalog")
        assert resp.status_code == 200
        kinds = {k["kind"]: k for k in resp.json()["kinds"]}
        assert set(kinds) == set(ir.LAYER_KINDS)
        conv = kinds["Conv2D"]
        names = [p["name"] for p in conv["params"]]
        assert names == ["filters", "kernel", "stride", "pad", "rounding"]
        defaults = {p["name"]: p.get("default") for p in conv["params"]}
        assert defaults["stride"] == [1, 1]
        assert defaults["rounding"] == "floor"

    def test_arity_classes(self, client):
        kinds = {k["kind"]: k["arity"] for k in client.get("/api/catalog").json()["kinds"]}
        assert kinds["Input"] == "none"
        assert kinds["Concat"] == "many"
        assert kinds["Add"] == "many"
        assert kinds["Dense"] == "one"


class TestValidateEndpoint:
    def test_clean_model(self, client):
        resp = client.post("/api/validate", json={"model": lenet_doc()})
        assert resp.status_code == 200
        assert resp.json() == {"diagnostics": []}

    def test_matches_library_output(self, client):
        doc = broken_doc()
        resp = client.post("/api/validate", json={"model": doc})
        assert resp.status_code == 200

        model = ir.document_to_model(doc)
        bindings = ir.input_bindings_from_metadata(model)
        partial, _ = shapes.infer_shapes_partial(model, bindings)
        expected = [d.to_dict() for d in linting.lint(model, partial)]
        assert resp.json()["diagnostics"] == expected
        assert any(d["rule_id"] == "L5" for d in expected)

    def test_missing_model_field_is_400(self, client):
        assert client.post("/api/validate", json={}).status_code == 400

    def test_malformed_json_is_400(self, client):
        resp = client.post(
            "/api/validate",
            content=b'{"model": ',
            headers={"content-type": "application/json"},
        )
        assert resp.status_code == 400

    def test_non_object_body_is_400(self, client):
        resp = client.post("/api/validate", json=[1, 2])
        assert resp.status_code == 400

    def test_invalid_document_is_422(self, client):
        doc = lenet_doc()
        doc["surprise"] = True
        assert client.post("/api/validate", json={"model": doc}).status_code == 422


class TestShapesEndpoint:
    def test_full_inference(self, client):
        resp = client.post("/api/shapes", json={"model": lenet_doc()})
        assert resp.status_code == 200
        inferred = resp.json()["shapes"]
        assert inferred["in"] == [32, 32, 1]
        assert inferred["prob"] == [10]

    def test_explicit_bindings_override(self, client):
        doc = lenet_doc()
        del doc["metadata"]["input_shape.in"]
        resp = client.post(
            "/api/shapes", json={"model": doc, "inputs": {"in": [32, 32, 1]}}
        )
        assert resp.status_code == 200
        assert resp.json()["shapes"]["prob"] == [10]

    def test_missing_binding_is_422(self, client):
        doc = lenet_doc()
        del doc["metadata"]["input_shape.in"]
        resp = client.post("/api/shapes", json={"model": doc})
        assert resp.status_code == 422

    def test_fault_carries_layer_id(self, client):
        doc = lenet_doc()
        resp = client.post(
            "/api/shapes", json={"model": doc, "inputs": {"in": [3, 3, 1]}}
        )
        assert resp.status_code == 422
        assert resp.json()["detail"]["layer"] == "c1"

    def test_bad_inputs_payload_is_400(self, client):
        resp = client.post(
            "/api/shapes", json={"model": lenet_doc(), "inputs": {"in": "32x32x1"}}
        )
        assert resp.status_code == 400


class TestCodegenEndpoint:
    @pytest.mark.parametrize("target", ["keras", "torch", "caffe"])
    def test_source_matches_library(self, client, target):
        resp = client.post("/api/codegen", json={"model": lenet_doc(), "target": target})
        assert resp.status_code == 200
        artifact = codegen.emit(zoo.zoo_get("lenet5"), target)
        body = resp.json()
        assert body["source"] == artifact.text
        assert body["filename"] == artifact.filename
        assert body["target"] == target

    def test_config_export_target(self, client):
        resp = client.post(
            "/api/codegen", json={"model": lenet_doc(), "target": "keras-config"}
        )
        assert resp.status_code == 200
        assert resp.json()["source"] == codegen.export_keras_config(zoo.zoo_get("lenet5")).text

    def test_lint_errors_are_422_with_diagnostics(self, client):
        resp = client.post("/api/codegen", json={"model": broken_doc(), "target": "keras"})
        assert resp.status_code == 422
        detail = resp.json()["detail"]
        assert detail["message"] == "lint errors present"
        assert any(d["rule_id"] == "L5" for d in detail["diagnostics"])

    def test_unknown_target_is_422(self, client):
        resp = client.post("/api/codegen", json={"model": lenet_doc(), "target": "onnx"})
        assert resp.status_code == 422

    def test_missing_target_is_400(self, client):
        assert client.post("/api/codegen", json={"model": lenet_doc()}).status_code == 400


class TestImportEndpoint:
    def test_caffe(self, client):
        text = codegen.emit(zoo.zoo_get("lenet5"), "caffe").text
        resp = client.post("/api/import", json={"format": "caffe", "text": text})
        assert resp.status_code == 200
        model = ir.document_to_model(resp.json()["model"])
        assert ir.graph_isomorphic(model, zoo.zoo_get("lenet5"))

    def test_keras(self, client):
        text = codegen.export_keras_config(zoo.zoo_get("lenet5")).text
        resp = client.post("/api/import", json={"format": "keras", "text": text})
        assert resp.status_code == 200
        assert resp.json()["notes"] == []

    def test_import_notes_surface(self, client):
        text = 'input: "d"\nlayer { name: "r" type: "ReLU" bottom: "d" top: "d" }'
        resp = client.post("/api/import", json={"format": "caffe", "text": text})
        assert resp.status_code == 200
        assert resp.json()["notes"] == ["in-place activation materialized: r"]

    def test_frontend_error_is_422(self, client):
        resp = client.post(
            "/api/import",
            json={"format": "caffe", "text": 'layer { name: "x" type: "Python" top: "x" }'},
        )
        assert resp.status_code == 422

    def test_unknown_format_is_400(self, client):
        resp = client.post("/api/import", json={"format": "onnx", "text": ""})
        assert resp.status_code == 400


class TestTraceEndpoint:
    def test_findings(self, client):
        resp = client.post(
            "/api/lint-trace", json={"text": "loss\n1.0\n0.8\nnan\n", "format": "csv"}
        )
        assert resp.status_code == 200
        findings = resp.json()["findings"]
        assert [(f["rule_id"], f["epoch"]) for f in findings] == [("R1", 3)]

    def test_config_override(self, client):
        resp = client.post(
            "/api/lint-trace",
            json={"text": "loss\n1.0\n1.0\n1.0\n", "config": {"window": 2}},
        )
        assert resp.status_code == 200
        assert [f["rule_id"] for f in resp.json()["findings"]] == ["R3"]

    def test_unknown_config_key_is_400(self, client):
        resp = client.post(
            "/api/lint-trace", json={"text": "loss\n1.0\n", "config": {"verbose": 1}}
        )
        assert resp.status_code == 400

    def test_malformed_trace_is_422(self, client):
        resp = client.post("/api/lint-trace", json={"text": "loss\nok\n"})
        assert resp.status_code == 422

    def test_bad_format_is_400(self, client):
        resp = client.post("/api/lint-trace", json={"text": "loss\n1.0\n", "format": "tsv"})
        assert resp.status_code == 400


class TestDesignsCrud:
    def test_create_read_update_delete(self, client):
        created = client.post("/api/designs", json=lenet_doc())
        assert created.status_code == 200
        record = created.json()
        assert record["revision"] == 1
        design_id = record["id"]

        fetched = client.get(f"/api/designs/{design_id}")
        assert fetched.status_code == 200
        assert fetched.json() == record

        doc = lenet_doc()
        doc["metadata"]["learning_rate"] = "0.01"
        updated = client.put(f"/api/designs/{design_id}", json=doc)
        assert updated.status_code == 200
        assert updated.json()["revision"] == 2
        assert updated.json()["created"] == record["created"]
        assert updated.json()["document"]["metadata"]["learning_rate"] == "0.01"

        deleted = client.delete(f"/api/designs/{design_id}")
        assert deleted.status_code == 200
        assert client.get(f"/api/designs/{design_id}").status_code == 404

    def test_put_creates_at_chosen_id(self, client):
        resp = client.put("/api/designs/my-design", json=lenet_doc())
        assert resp.status_code == 200
        assert resp.json()["id"] == "my-design"
        assert client.get("/api/designs/my-design").status_code == 200

    def test_stored_document_is_canonical(self, client):
        doc = lenet_doc()
        doc["layers"] = list(reversed(doc["layers"]))
        resp = client.post("/api/designs", json=doc)
        assert resp.status_code == 200
        assert resp.json()["document"] == lenet_doc()

    def test_invalid_document_is_422(self, client):
        resp = client.post("/api/designs", json={"format": "other"})
        assert resp.status_code == 422

    def test_unknown_design_is_404(self, client):
        assert client.get("/api/designs/missing").status_code == 404
        assert client.delete("/api/designs/missing").status_code == 404

    def test_bad_id_rejected(self, client):
        assert client.put("/api/designs/no%20spaces", json=lenet_doc()).status_code == 422
        assert client.get("/api/designs/.%2e").status_code == 404


class TestConcurrency:
    def test_identical_requests_are_byte_identical(self, client):
        payload = json.dumps({"model": ir.model_to_document(zoo.zoo_get("vgg16"))})

        def call(_):
            return client.post(
                "/api/validate",
                content=payload,
                headers={"content-type": "application/json"},
            )

        with ThreadPoolExecutor(max_workers=32) as pool:
            responses = list(pool.map(call, range(32)))
        assert all(r.status_code == 200 for r in responses)
        bodies = {r.content for r in responses}
        assert len(bodies) == 1

    def test_concurrent_updates_count_every_revision(self, client):
        client.put("/api/designs/shared", json=lenet_doc())

        def update(_):
            return client.put("/api/designs/shared", json=lenet_doc())

        with ThreadPoolExecutor(max_workers=8) as pool:
            responses = list(pool.map(update, range(16)))
        assert all(r.status_code == 200 for r in responses)
        final = client.get("/api/designs/shared").json()
        assert final["revision"] == 17


class TestStoreDurability:
    def test_leftover_temp_files_are_invisible(self, tmp_path):
        s = store.DesignStore(str(tmp_path))
        record = s.save(lenet_doc(), "keeper")
        # simulate a crash that left a half-written temp file behind
        (tmp_path / "keeper.json.tmp-deadbeef").write_text("{ not json")
        assert s.list_ids() == ["keeper"]
        assert s.load("keeper").document == record.document

    def test_unreadable_file_reports_storage_failure(self, tmp_path):
        s = store.DesignStore(str(tmp_path))
        s.save(lenet_doc(), "keeper")
        (tmp_path / "keeper.json").write_text("{ truncated")
        with pytest.raises(store.StorageFailure):
            s.load("keeper")

    def test_bad_ids(self, tmp_path):
        s = store.DesignStore(str(tmp_path))
        for bad in ("", "a" * 65, "../escape", "a b"):
            with pytest.raises(store.BadDesignId):
                s.save(lenet_doc(), bad)

    def test_generated_ids_are_valid_and_unique(self, tmp_path):
        s = store.DesignStore(str(tmp_path))
        ids = {s.save(lenet_doc()).id for _ in range(5)}
        assert len(ids) == 5
        assert sorted(ids) == s.list_ids()
