import csv
import subprocess
import sys

import numpy as np
import pytest
from scipy import ndimage

from stemcalyx import _backend
from stemcalyx.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from stemcalyx.config import PipelineConfig
from stemcalyx.imaging import load_image, load_mask, save_image
from stemcalyx.labels import ClassLabel
from stemcalyx.pipeline import read_features
from stemcalyx.synthgen import SynthSpec, gen_apple_scene

from conftest import disk_mask


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--n", 4, "--seed", 42, "--out", root / "corpus") == EXIT_OK
    assert run("extract", root / "corpus", "--corpus", "--out", root / "features.csv") == EXIT_OK
    return root


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -------------------------------------------------------------------- synth

def test_synth_smoke_and_determinism(corpus, tmp_path):
    scenes = sorted((corpus / "corpus" / "scenes").iterdir())
    assert len(scenes) == 12 and len(read_csv(corpus / "corpus" / "manifest.csv")) == 12
    assert run("synth", "--n", 4, "--seed", 42, "--out", tmp_path / "again") == EXIT_OK
    for f in (corpus / "corpus").rglob("*"):
        if f.is_file():
            assert (tmp_path / "again" / f.relative_to(corpus / "corpus")).read_bytes() == f.read_bytes()
    assert run("synth", "--n", 2, "--out", tmp_path / "tiny") == EXIT_USAGE


# ------------------------------------------------------------------- detect

def test_detect_one_defect(tmp_path):
    spec = SynthSpec(ClassLabel.DEFECT, 1.0, 20.0, 0.4, 5)
    scene = gen_apple_scene([spec], 256, 8)
    save_image(scene.image, tmp_path / "scene.pgm")
    assert run("detect", tmp_path / "scene.pgm", "--out", tmp_path / "det") == EXIT_OK
    rows = read_csv(tmp_path / "det" / "candidates.csv")
    assert len(rows) == 1
    truth = scene.truth[0][0]
    # refinement admits the high-gradient ring just outside the dark region
    grown = int(ndimage.binary_dilation(truth, np.ones((3, 3), bool)).sum())
    assert abs(int(rows[0]["area"]) - grown) <= 0.05 * truth.sum()
    mask = load_mask(tmp_path / "det" / rows[0]["file"])
    assert mask.sum() == int(rows[0]["area"])
    overlay = load_image(tmp_path / "det" / "overlay.pgm")
    x, y = int(rows[0]["origin_x"]), int(rows[0]["origin_y"])
    assert (overlay[y:y + mask.shape[0], x:x + mask.shape[1]] == 255).any()
    assert PipelineConfig.load(tmp_path / "det" / "config.txt") == PipelineConfig()


def test_detect_blank_and_unreadable(tmp_path, capsys):
    scene = gen_apple_scene([], 128, 1)
    save_image(scene.image, tmp_path / "blank.pgm")
    assert run("detect", tmp_path / "blank.pgm", "--out", tmp_path / "b") == EXIT_OK
    assert read_csv(tmp_path / "b" / "candidates.csv") == []
    capsys.readouterr()
    assert run("detect", tmp_path / "missing.pgm", "--out", tmp_path / "m") == EXIT_DATA
    assert "[load]" in capsys.readouterr().err
    (tmp_path / "junk.pgm").write_bytes(b"P5 4 4 255\n\x00")
    assert run("detect", tmp_path / "junk.pgm", "--out", tmp_path / "j") == EXIT_DATA


# ------------------------------------------------------------------ extract

def test_extract_candidates_with_one_pixel(tmp_path, capsys):
    d = tmp_path / "cands"
    d.mkdir()
    masks = [disk_mask(40), np.ones((1, 1), bool), disk_mask(36, 15) | np.eye(36, dtype=bool),
             np.pad(np.ones((20, 50), bool), 1)]
    with open(d / "candidates.csv", "w") as fh:
        fh.write("id,file,origin_x,origin_y,area,bbox_x,bbox_y,bbox_w,bbox_h\n")
        for i, m in enumerate(masks):
            save_image(m, d / f"c{i}.pgm")
            fh.write(f"{i},c{i}.pgm,{3 * i},{5 * i},{int(m.sum())},0,0,0,0\n")
    capsys.readouterr()
    assert run("extract", d, "--out", tmp_path / "f.csv") == EXIT_OK
    assert "warning: 1 candidates skipped" in capsys.readouterr().err
    rows, layout = read_features(tmp_path / "f.csv")
    assert [r.sample_id for r in rows] == ["0", "2", "3"]
    assert sum(n for _, n in layout) == 202 and all(r.label is None for r in rows)
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert header[:5] == ["sample_id", "apple_id", "view_id", "label", "m_1"]
    assert len(header) == 4 + 202
    first = (tmp_path / "f.csv").read_bytes()
    assert run("extract", d, "--out", tmp_path / "f.csv") == EXIT_OK
    assert (tmp_path / "f.csv").read_bytes() == first
    assert (tmp_path / "f.csv.config.txt").exists()


def test_extract_missing_table(tmp_path):
    assert run("extract", tmp_path, "--out", tmp_path / "f.csv") == EXIT_DATA


# --------------------------------------------------------- train / evaluate

def test_corpus_features(corpus):
    rows, layout = read_features(corpus / "features.csv")
    assert len(rows) == 12 and [n for _, n in layout] == [42, 64, 96]
    assert {r.label for r in rows} == set(ClassLabel)


def test_knn_memorises_training_set(corpus, capsys):
    f = corpus / "features.csv"
    assert run("train", f, "--model", corpus / "k1.txt", "--subset", "all",
               "--set", "classifier=knn", "--set", "knn_k=1") == EXIT_OK
    capsys.readouterr()
    assert run("evaluate", f, "--model", corpus / "k1.txt", "--subset", "all",
               "--out", corpus / "rep") == EXIT_OK
    out = capsys.readouterr().out
    assert "accuracy 12 (100%)" in out
    text = (corpus / "rep" / "report.txt").read_text()
    assert text == out
    tpr_rows = [l for l in text.splitlines() if l.split()[:1] in (["stem"], ["calyx"], ["defect"])]
    assert len(tpr_rows) >= 3 and "4 (100%)" in tpr_rows[0]
    assert read_csv(corpus / "rep" / "report.csv")[-1]["class"] == "all"


def test_train_evaluate_predict_default_svm(corpus, tmp_path, capsys):
    f = corpus / "features.csv"
    assert run("train", f, "--model", tmp_path / "svm.txt") == EXIT_OK
    assert (tmp_path / "svm.txt.config.txt").exists()
    capsys.readouterr()
    assert run("evaluate", f, "--model", tmp_path / "svm.txt") == EXIT_OK
    report = capsys.readouterr().out
    assert report.splitlines()[0].split() == ["class", "n", "TPR", "FPR"]
    assert run("predict", f, "--model", tmp_path / "svm.txt", "--out", tmp_path / "p.csv") == EXIT_OK
    pred = read_csv(tmp_path / "p.csv")
    assert len(pred) == 12 and {p["predicted"] for p in pred} <= {"stem", "calyx", "defect"}


def test_model_round_trip_through_files(corpus, tmp_path):
    from stemcalyx.classify import evaluate, load_model, split_drop_one_out, train_from_config
    from stemcalyx.pipeline import rows_to_dataset

    f = corpus / "features.csv"
    data = rows_to_dataset(*read_features(f))
    train, test = split_drop_one_out(data, 0.75, 42)
    mem = evaluate(train_from_config(train, PipelineConfig()), test)
    assert run("train", f, "--model", tmp_path / "m.txt") == EXIT_OK
    disk = evaluate(load_model(tmp_path / "m.txt"), test)
    assert np.array_equal(mem.confusion, disk.confusion)


def test_sweeps(corpus, tmp_path):
    f = corpus / "features.csv"
    assert run("sweep", f, "--axis", "fourier_k", "--grid", "8,16,32,64",
               "--out", tmp_path / "k.csv") == EXIT_OK
    rows = read_csv(tmp_path / "k.csv")
    assert [r["fourier_k"] for r in rows] == ["8", "16", "32", "64"]
    assert set(rows[0]) == {"fourier_k", "n_train", "n_test", "tpr_stem", "tpr_calyx",
                            "tpr_defect", "accuracy"}
    first = (tmp_path / "k.csv").read_bytes()
    assert run("sweep", f, "--axis", "fourier_k", "--grid", "8,16,32,64",
               "--out", tmp_path / "k.csv") == EXIT_OK
    assert (tmp_path / "k.csv").read_bytes() == first
    assert run("sweep", f, "--axis", "train_fraction", "--grid", "0.5,0.75",
               "--set", "classifier=knn", "--out", tmp_path / "t.csv") == EXIT_OK
    rows = read_csv(tmp_path / "t.csv")
    assert [int(r["n_train"]) for r in rows] == [6, 9]
    assert run("sweep", f, "--axis", "fourier_k", "--grid", "65", "--out", tmp_path / "x.csv") \
        == EXIT_USAGE
    assert run("sweep", f, "--axis", "fourier_k", "--grid", "a,b", "--out", tmp_path / "x.csv") \
        == EXIT_USAGE


def test_fusion_command(corpus, tmp_path, capsys):
    assert run("fusion", corpus / "features.csv", "--classifiers", "knn,ldc",
               "--out", tmp_path / "fusion.csv") == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0].split() == ["classifier", "MD", "MD+RD",
                                                               "MD+RD+FD"]
    assert [r["classifier"] for r in read_csv(tmp_path / "fusion.csv")] == ["knn", "ldc"]
    assert run("fusion", corpus / "features.csv", "--classifiers", "ann") == EXIT_USAGE


# ------------------------------------------------------------- exit codes

def test_exit_codes(corpus, tmp_path):
    f = corpus / "features.csv"
    assert run() == EXIT_USAGE
    assert run("bogus") == EXIT_USAGE
    assert run("train") == EXIT_USAGE
    assert run("train", f, "--model", tmp_path / "m", "--set", "no_such=1") == EXIT_USAGE
    assert run("train", f, "--model", tmp_path / "m", "--set", "knn_k") == EXIT_USAGE
    (tmp_path / "bad.csv").write_text("sample_id,apple_id,view_id,label,m_1\nx,1,0,stem,zz\n")
    assert run("train", tmp_path / "bad.csv", "--model", tmp_path / "m") == EXIT_DATA
    (tmp_path / "bad.txt").write_text("not a model\n")
    assert run("evaluate", f, "--model", tmp_path / "bad.txt") == EXIT_DATA
    assert run("train", f, "--model", tmp_path / "m", "--set", "svm_c=1000",
               "--set", "svm_max_passes=1", "--set", "svm_tol=1e-12",
               "--subset", "all") == EXIT_NUMERIC
    assert run("--help") == EXIT_OK


def test_config_file_and_backend_flag(corpus, tmp_path):
    cfg = PipelineConfig(classifier="ldc")
    cfg.save(tmp_path / "c.txt")
    before = _backend.current()
    try:
        assert run("--backend", "python", "train", corpus / "features.csv",
                   "--model", tmp_path / "m.txt", "--config", tmp_path / "c.txt") == EXIT_OK
        assert _backend.current() == "python"
    finally:
        _backend.set_backend(before)
    assert (tmp_path / "m.txt").read_text().splitlines()[1] == "kind ldc"
    assert PipelineConfig.load(tmp_path / "m.txt.config.txt") == cfg


def test_module_entry_point_and_verbosity(tmp_path):
    env = {"STEMCALYX_VERBOSE": "1", "PATH": "/usr/bin:/bin"}
    res = subprocess.run([sys.executable, "-m", "stemcalyx", "synth", "--n", "4",
                          "--out", str(tmp_path / "c"), "--image-size", "256"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0 and "12 scenes" in res.stdout
    res = subprocess.run([sys.executable, "-m", "stemcalyx", "extract", str(tmp_path / "c"),
                          "--corpus", "--out", str(tmp_path / "f.csv")],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0 and "featurised 12/12" in res.stderr
