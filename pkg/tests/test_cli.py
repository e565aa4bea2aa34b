import json
import subprocess
import sys

import numpy as np
import pytest

from taskdiff.cli import main
from taskdiff.corpus import save_corpus
from taskdiff.embedding import write_embeddings
from taskdiff.metric import load_distance_matrix

from corpora import make_synthetic_corpus

HASH = "hash:64:7"


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    corpus = make_synthetic_corpus(n_per_domain=8,
                                   domains=["flights", "banking", "dining"], seed=21)
    root = tmp_path_factory.mktemp("synth_corpus")
    save_corpus(corpus, root)
    return root


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --- keys ---


def test_keys_count_oracle(tmp_path, capsys):
    from taskdiff.corpus import Conversation, Corpus, Ontology, SlotFilling, Speaker, Turn

    onto = Ontology(intents=("A", "B"), slots=("s1", "s2"))
    conv = Conversation(
        id="only", domain_label="d",
        turns=(
            Turn(speaker=Speaker.USER, utterance="first text", active_intents=("A",),
                 slot_fillings=(SlotFilling("s1", "first", (0, 5)),)),
            Turn(speaker=Speaker.SYSTEM, utterance="second text",
                 slot_fillings=(SlotFilling("s2", "second", (0, 6)),)),
            Turn(speaker=Speaker.USER, utterance="third text", active_intents=("B",)),
        ),
    )
    root = tmp_path / "corpus"
    save_corpus(Corpus(ontology=onto, conversations=(conv,)), root)
    out_file = tmp_path / "keys.txt"
    code, out, _ = run(["keys", "--corpus", str(root), "--out", str(out_file)], capsys)
    assert code == 0
    lines = out_file.read_text().strip().splitlines()
    # 3 distinct masked texts + 2 intents + 2 slots
    assert len(lines) == 7
    assert len(set(lines)) == 7
    assert sum(1 for l in lines if l.startswith("utt:")) == 3
    assert sum(1 for l in lines if l.startswith("intent:")) == 2
    assert sum(1 for l in lines if l.startswith("slot:")) == 2
    # masked placeholders present in the utterance keys
    assert any("<s1>" in l for l in lines)


def test_keys_no_mask_emits_raw_texts(figure_corpus_dir, tmp_path, capsys):
    out_file = tmp_path / "keys_raw.txt"
    code, _, _ = run(["keys", "--corpus", str(figure_corpus_dir), "--no-mask",
                      "--out", str(out_file)], capsys)
    assert code == 0
    text = out_file.read_text()
    assert "New York" in text
    assert "<arrival_city>" not in text


def test_keys_dedup_across_conversations(synth_dir, tmp_path, capsys):
    out_file = tmp_path / "keys.txt"
    code, _, _ = run(["keys", "--corpus", str(synth_dir), "--out", str(out_file)],
                     capsys)
    assert code == 0
    lines = out_file.read_text().strip().splitlines()
    assert len(lines) == len(set(lines))


# --- dist / profile ---


def test_dist_same_id_zero(figure_corpus_dir, capsys):
    code, out, _ = run(["dist", "--corpus", str(figure_corpus_dir),
                        "--embeddings", HASH, "--id1", "user_a", "--id2", "user_a"],
                       capsys)
    assert code == 0
    assert "taskdiff 0.000000" in out


def test_dist_figure_pair_zero_breakdown(figure_corpus_dir, capsys):
    code, out, _ = run(["dist", "--corpus", str(figure_corpus_dir),
                        "--embeddings", HASH, "--id1", "user_a", "--id2", "user_b"],
                       capsys)
    assert code == 0
    assert "taskdiff 0.000000" in out
    for line in out.strip().splitlines()[:-1]:
        assert "w1=0.000000" in line


def test_dist_missing_embedding_names_key(figure_corpus_dir, tmp_path, capsys):
    # an embedding file lacking every key the corpus needs
    emb = tmp_path / "partial.emb"
    write_embeddings({"utt:unrelated": np.ones(16, dtype=np.float32)}, 16, emb)
    code, out, err = run(["dist", "--corpus", str(figure_corpus_dir),
                          "--embeddings", str(emb),
                          "--id1", "user_a", "--id2", "user_b"], capsys)
    assert code == 3
    record = json.loads(err.strip())
    assert record["error"] == "MissingEmbedding"
    assert "utt:" in record["message"]


def test_dist_unknown_id(figure_corpus_dir, capsys):
    code, _, err = run(["dist", "--corpus", str(figure_corpus_dir),
                        "--embeddings", HASH, "--id1", "nope", "--id2", "user_a"],
                       capsys)
    assert code == 3
    assert "nope" in err


def test_profile_dumps_components(figure_corpus_dir, capsys):
    code, out, _ = run(["profile", "--corpus", str(figure_corpus_dir),
                        "--embeddings", HASH, "--id", "user_a"], capsys)
    assert code == 0
    dump = json.loads(out)
    assert dump["conversation_id"] == "user_a"
    assert set(dump["intents"]["labels"]) == {"BookFlight", "BookHotel", "RentCar"}
    assert sum(dump["utterances"]["weights"]) == pytest.approx(1.0)


# --- matrix ---


def test_matrix_writes_file_and_manifest(synth_dir, tmp_path, capsys):
    out = tmp_path / "synth.dmat"
    code, _, _ = run(["matrix", "--corpus", str(synth_dir), "--embeddings", HASH,
                      "--out", str(out)], capsys)
    assert code == 0
    matrix = load_distance_matrix(out)
    assert len(matrix.ids) == 24
    manifest = json.loads((tmp_path / "synth.dmat.manifest.json").read_text())
    assert manifest["command"] == "matrix"
    assert manifest["config"]["gamma_intents"] == 2.0


def test_matrix_byte_determinism_across_processes(synth_dir, tmp_path):
    outs = []
    for name in ("a.dmat", "b.dmat"):
        out = tmp_path / name
        proc = subprocess.run(
            [sys.executable, "-m", "taskdiff.cli", "matrix",
             "--corpus", str(synth_dir), "--embeddings", HASH, "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    m1 = (tmp_path / "a.dmat.manifest.json").read_text()
    m2 = (tmp_path / "b.dmat.manifest.json").read_text()
    assert m1.replace("a.dmat", "X") == m2.replace("b.dmat", "X")


# --- eval commands ---


def test_knn_command(synth_dir, tmp_path, capsys):
    out_dir = tmp_path / "knn"
    code, out, _ = run(["knn", "--corpus", str(synth_dir), "--embeddings", HASH,
                        "--k", "3", "--folds", "4", "--out-dir", str(out_dir)],
                       capsys)
    assert code == 0
    assert "accuracy" in out
    assert (out_dir / "report.txt").exists()
    assert (out_dir / "report.jsonl").exists()
    assert (out_dir / "manifest.json").exists()
    assert (out_dir / "accuracy.png").exists()
    records = [json.loads(l) for l in
               (out_dir / "report.jsonl").read_text().splitlines()]
    assert any(r.get("measure") == "accuracy" for r in records)


def test_knn_k_too_large(synth_dir, tmp_path, capsys):
    code, _, err = run(["knn", "--corpus", str(synth_dir), "--embeddings", HASH,
                        "--k", "999", "--out-dir", str(tmp_path / "x")], capsys)
    assert code == 3
    assert json.loads(err.strip())["error"] == "InsufficientData"


def test_knn_reuses_matrix_file(synth_dir, tmp_path, capsys):
    mat = tmp_path / "m.dmat"
    code, _, _ = run(["matrix", "--corpus", str(synth_dir), "--embeddings", HASH,
                      "--out", str(mat)], capsys)
    assert code == 0
    out_dir = tmp_path / "knn2"
    code, out, _ = run(["knn", "--corpus", str(synth_dir), "--embeddings", HASH,
                        "--matrix", str(mat), "--k", "3", "--folds", "4",
                        "--no-figures", "--out-dir", str(out_dir)], capsys)
    assert code == 0
    assert not (out_dir / "accuracy.png").exists()


def test_cluster_command(synth_dir, tmp_path, capsys):
    out_dir = tmp_path / "cluster"
    code, out, _ = run(["cluster", "--corpus", str(synth_dir), "--embeddings", HASH,
                        "--out-dir", str(out_dir)], capsys)
    assert code == 0
    assert "purity" in out
    csv_lines = (out_dir / "clusters.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "id,x,y,cluster,domain"
    assert len(csv_lines) == 25
    assert (out_dir / "clusters.png").exists()


def test_perturb_taskdiff_row_is_zero(synth_dir, tmp_path, capsys):
    out_dir = tmp_path / "perturb"
    code, out, _ = run(["perturb", "--corpus", str(synth_dir), "--embeddings", HASH,
                        "--fraction", "0.3", "--metrics", "taskdiff,conved",
                        "--no-figures", "--out-dir", str(out_dir)], capsys)
    assert code == 0
    assert "taskdiff avg_distance 0.000000" in out
    report = (out_dir / "report.txt").read_text()
    assert "taskdiff_avg_distance" in report


def test_ablate_command(synth_dir, tmp_path, capsys):
    out_dir = tmp_path / "ablate"
    code, out, _ = run(["ablate", "--corpus", str(synth_dir), "--embeddings", HASH,
                        "--k", "3", "--folds", "3", "--sample-size", "24",
                        "--out-dir", str(out_dir)], capsys)
    assert code == 0
    assert "taskdiff" in out
    assert (out_dir / "ablation.png").exists()


def test_usage_error_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "taskdiff.cli", "dist", "--corpus", "somewhere"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2


def test_dist_sinkhorn_solver(figure_corpus_dir, capsys):
    code, out, _ = run(["dist", "--corpus", str(figure_corpus_dir),
                        "--embeddings", HASH, "--solver", "sinkhorn",
                        "--epsilon", "0.05", "--id1", "user_a", "--id2", "user_c"],
                       capsys)
    assert code == 0
    approx = float(out.strip().splitlines()[-1].split()[-1])
    code, out, _ = run(["dist", "--corpus", str(figure_corpus_dir),
                        "--embeddings", HASH, "--id1", "user_a", "--id2", "user_c"],
                       capsys)
    exact = float(out.strip().splitlines()[-1].split()[-1])
    assert approx == pytest.approx(exact, rel=0.05)


def test_sgd_format_flag(sgd_mini_dir, tmp_path, capsys):
    out_file = tmp_path / "keys_sgd.txt"
    code, _, _ = run(["keys", "--corpus", str(sgd_mini_dir), "--format", "sgd",
                      "--out", str(out_file)], capsys)
    assert code == 0
    lines = out_file.read_text().strip().splitlines()
    assert any(l.startswith("intent:FindRestaurants") for l in lines)
