import json

import numpy as np
import pytest

from vanideal.avinn import Classifier, PolynomialLayer, fit_avinn
from vanideal.bundle import load_bundle, load_generator_sets, save_bundle
from vanideal.cli import cmd_eval, main
from vanideal.features import Dataset, load_dataset, write_dataset
from vanideal.polycore import Monomial, MonomialBasis
from vanideal.vanishing import VanishConfig


def read_dir(path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.fixture(scope="module")
def circles_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    path = d / "circles.csv"
    assert main(["synth", "--spec", "circles", "--seed", "0", "--out", str(path), "--test-count", "200"]) == 0
    return path


@pytest.fixture(scope="module")
def fitted(circles_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle") / "b"
    assert main(["fit", "--data", str(circles_csv), "--out", str(out), "--seed", "0"]) == 0
    return out


def xy_bundle(path, head=1.0):
    layer = PolynomialLayer(MonomialBasis([Monomial((1, 1))]), np.array([[1.0]]), [1])
    save_bundle(path, Classifier(layer, np.array([[head]]), np.zeros(1)), {"kind": "toy"})
    return path


class TestSynth:
    def test_circles_rows(self, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["synth", "--spec", "circles", "--seed", "1", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 1001
        assert len(load_dataset(out)) == 1000

    def test_bad_shape(self, tmp_path, capsys):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"classes": [{"shape": "blob", "count": 3}]}))
        assert main(["synth", "--spec", str(spec), "--seed", "0", "--out", str(tmp_path / "x.csv")]) == 2
        assert "blob" in capsys.readouterr().err

    def test_bare_class_list(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps([{"shape": "lines", "count": 20}, {"shape": "circle", "count": 10}]))
        out = tmp_path / "x.csv"
        assert main(["synth", "--spec", str(spec), "--seed", "0", "--out", str(out)]) == 0
        assert len(load_dataset(out)) == 30

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            main(["synth", "--spec", "curves3", "--seed", "5", "--out", str(p)])
        assert a.read_bytes() == b.read_bytes()

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["synth", "--spec", "circles", "--seed", "0", "--out", str(blocker / "x.csv")]) == 3

    def test_seed_required(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--spec", "circles", "--out", str(tmp_path / "x.csv")])
        assert exc.value.code == 2


class TestFit:
    def test_bundle_and_accuracy_line(self, fitted, circles_csv, capsys):
        assert {"manifest.json", "preprocess.json", "layer.json", "head.json", "generators.json"} <= set(
            p.name for p in fitted.iterdir()
        )
        man = json.loads((fitted / "manifest.json").read_text())
        assert man["format"] == "vanideal-bundle/1" and man["config"]["seed"] == 0
        main(["fit", "--data", str(circles_csv), "--out", str(fitted.parent / "again"), "--seed", "0"])
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "class,monomials,polynomials,seconds"
        assert "test_accuracy=" in out

    def test_stats_table(self, circles_csv, tmp_path):
        stats = tmp_path / "stats.csv"
        main(["fit", "--data", str(circles_csv), "--out", str(tmp_path / "b"), "--seed", "0", "--stats", str(stats)])
        rows = stats.read_text().splitlines()
        assert rows[0] == "class,monomials,polynomials,seconds"
        assert [r.split(",")[0] for r in rows[1:]] == ["0", "1"]

    @pytest.mark.parametrize(
        "flags",
        [["--psi", "-1"], ["--tau", "1"], ["--keep-fraction", "0"], ["--max-degree", "0"], ["--momentum", "1"], ["--batch", "0"]],
    )
    def test_validation(self, circles_csv, tmp_path, flags):
        out = tmp_path / "b"
        assert main(["fit", "--data", str(circles_csv), "--out", str(out), "--seed", "0", *flags]) == 2
        assert not out.exists()

    def test_missing_label(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("f0,f1\n0,1\n")
        assert main(["fit", "--data", str(bad), "--out", str(tmp_path / "b"), "--seed", "0"]) == 3

    def test_generators_round_trip(self, fitted):
        model, _ = load_bundle(fitted)
        sets = load_generator_sets(fitted)
        assert sum(len(s) for s in sets) == model.layer.n_polys

    def test_validation_split_pruning(self, tmp_path):
        d = load_dataset_with_val(tmp_path)
        code = main(
            ["fit", "--data", str(d), "--out", str(tmp_path / "b"), "--seed", "0",
             "--keep-fraction", "0.5", "--prune-split", "val"]
        )
        assert code == 0
        assert json.loads((tmp_path / "b" / "manifest.json").read_text())["config"]["prune_split"] == "val"


def load_dataset_with_val(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 2 * np.pi, 300)
    r = np.repeat([1.0, 0.5], 150)
    pts = np.c_[r * np.cos(t), r * np.sin(t)] + 0.01 * rng.standard_normal((300, 2))
    split = np.array(["train", "val", "test"] * 100)
    path = tmp_path / "v.csv"
    write_dataset(Dataset(pts, np.repeat([0, 1], 150), split), path)
    return path


class TestEval:
    def test_round_trip_exact(self, fitted, circles_csv, tmp_path):
        data = load_dataset(circles_csv)
        train = data.part("train")
        res = fit_avinn(train, VanishConfig(subsample=512, seed=0), n_classes=2)
        loaded, _ = load_bundle(fitted)
        test = data.part("test")
        assert loaded.logits(test.points).tobytes() == res.model.logits(test.points).tobytes()
        metrics = cmd_eval(fitted, circles_csv, tmp_path / "m.json")
        assert metrics["accuracy"] == float(np.mean(res.model.predict(test.points) == test.labels))

    def test_perfect_model(self, tmp_path):
        # |xy| separates points on the axes (class 0) from the diagonal (class 1)
        layer = PolynomialLayer(MonomialBasis([Monomial((1, 1))]), np.array([[1.0]]), [1])
        model = Classifier(layer, np.array([[-1.0], [1.0]]), np.array([0.1, -0.1]))
        save_bundle(tmp_path / "b", model, {"kind": "toy"})
        pts = np.array([[0.5, 0.0], [0.0, -0.7], [0.6, 0.6], [-0.5, -0.5]])
        write_dataset(Dataset(pts, [0, 0, 1, 1]), tmp_path / "d.csv")
        m = cmd_eval(tmp_path / "b", tmp_path / "d.csv", csv_path=tmp_path / "pc.csv")
        assert m["accuracy"] == 1.0
        assert m["confusion"] == [[2, 0], [0, 2]]
        assert (tmp_path / "pc.csv").read_text().splitlines()[1] == "0,2,1.0"

    def test_empty_split(self, fitted, tmp_path):
        write_dataset(Dataset(np.zeros((2, 2)), [0, 1]), tmp_path / "d.csv")
        assert main(["eval", "--bundle", str(fitted), "--data", str(tmp_path / "d.csv"), "--split", "test"]) == 3

    def test_label_out_of_range(self, fitted, tmp_path):
        write_dataset(Dataset(np.zeros((2, 2)), [0, 5]), tmp_path / "d.csv")
        assert main(["eval", "--bundle", str(fitted), "--data", str(tmp_path / "d.csv")]) == 3

    def test_dimension_mismatch(self, fitted, tmp_path):
        write_dataset(Dataset(np.zeros((2, 3)), [0, 1]), tmp_path / "d.csv")
        assert main(["eval", "--bundle", str(fitted), "--data", str(tmp_path / "d.csv")]) == 3

    def test_not_a_bundle(self, circles_csv, tmp_path):
        assert main(["eval", "--bundle", str(tmp_path), "--data", str(circles_csv)]) == 3


class TestComplexity:
    def test_xy_bundle(self, tmp_path):
        b = xy_bundle(tmp_path / "xy")
        out = tmp_path / "r.json"
        assert main(["complexity", "--bundle", str(b), "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["bound_product"] == 8.0
        assert rep["bound_sum"] == pytest.approx(2 ** (4 / 3) + 2)
        assert rep["measured_product"] <= 8.0 and all(rep["checks"].values())
        first = out.read_bytes()
        main(["complexity", "--bundle", str(b), "--out", str(out)])
        assert out.read_bytes() == first

    def test_delta_zero(self, tmp_path):
        b = xy_bundle(tmp_path / "xy")
        assert main(["complexity", "--bundle", str(b), "--out", str(tmp_path / "r.json"), "--delta", "0"]) == 2

    def test_zero_norm_head(self, tmp_path):
        b = xy_bundle(tmp_path / "xy", head=0.0)
        assert main(["complexity", "--bundle", str(b), "--out", str(tmp_path / "r.json")]) == 4

    def test_with_data(self, fitted, circles_csv, tmp_path):
        out = tmp_path / "r.json"
        code = main(
            ["complexity", "--bundle", str(fitted), "--out", str(out), "--data", str(circles_csv), "--gamma", "0.5"]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert 0 <= rep["margin_loss"] <= 1
        assert rep["generalization_bound"] >= rep["margin_loss"]

    def test_lambda_override(self, tmp_path):
        b = xy_bundle(tmp_path / "xy")
        out = tmp_path / "r.json"
        assert main(["complexity", "--bundle", str(b), "--out", str(out), "--lambda1", "2"]) == 0
        assert json.loads(out.read_text())["bound_product"] == 16.0
        assert main(["complexity", "--bundle", str(b), "--out", str(out), "--lambda1", "0.5"]) == 2


class TestBaseline:
    def test_linear_below_avinn(self, fitted, circles_csv, tmp_path):
        main(["baseline", "--kind", "linear-head", "--data", str(circles_csv), "--out", str(tmp_path / "lin"), "--seed", "0"])
        lin = cmd_eval(tmp_path / "lin", circles_csv)["accuracy"]
        avinn = cmd_eval(fitted, circles_csv)["accuracy"]
        assert lin <= 0.75 < avinn

    def test_random_deterministic_and_shape(self, fitted, circles_csv, tmp_path):
        for name in ("r1", "r2"):
            code = main(
                ["baseline", "--kind", "random-monomials", "--reference", str(fitted),
                 "--data", str(circles_csv), "--out", str(tmp_path / name), "--seed", "3"]
            )
            assert code == 0
        assert read_dir(tmp_path / "r1") == read_dir(tmp_path / "r2")
        ref, _ = load_bundle(fitted)
        rnd, man = load_bundle(tmp_path / "r1")
        assert (rnd.layer.n_polys, rnd.layer.n_monomials) == (ref.layer.n_polys, ref.layer.n_monomials)
        assert man["kind"] == "random-monomials"

    def test_missing_reference(self, circles_csv, tmp_path):
        code = main(
            ["baseline", "--kind", "random-monomials", "--data", str(circles_csv), "--out", str(tmp_path / "r"), "--seed", "0"]
        )
        assert code == 2


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "vanideal", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "synth" in r.stdout
