import json
import os

import numpy as np
import pytest

from derev.cli import main, load_trace
from derev.configio import (ConfigError, parse_config_text,
                            pipeline_config_from_entries,
                            scene_spec_from_entries)
from derev.wavio import read_wav, write_wav

SCENE_CFG = """
# small test scene
t60 = 0.5
snr_db = 10
doa_azimuth = 0.7853981633974483
duration = 1.0
seed = 11
mic_count = 8
mic_spacing = 0.04
sample_rate = 16000
"""

PIPELINE_CFG = """
frame_len = 512
hop = 256
fft_len = 512
sample_rate = 16000
mic_count = 8
mic_spacing = 0.04
doa_azimuth = 0.7853981633974483
mode = full
"""


@pytest.fixture()
def scene_dir(tmp_path):
    spec = tmp_path / "scene.cfg"
    spec.write_text(SCENE_CFG)
    out = tmp_path / "scene"
    assert main(["simulate", str(spec), str(out)]) == 0
    return out


class TestConfigParsing:
    def test_comments_and_whitespace(self):
        entries = parse_config_text("a = 1  # trailing\n\n# full line\n b=2 ")
        assert entries == {"a": "1", "b": "2"}

    def test_malformed_line(self):
        with pytest.raises(ConfigError):
            parse_config_text("just words")

    def test_unknown_pipeline_key(self):
        with pytest.raises(ConfigError):
            pipeline_config_from_entries({"bogus_key": "1"})

    def test_explicit_positions(self):
        entries = {"mic_positions": "0,0,0; 0.1,0,0; 0.2,0,0"}
        spec, geom, rate, extras = scene_spec_from_entries(entries)
        assert geom.num_mics == 3
        assert rate == 16000

    def test_infinite_snr(self):
        spec, *_ = scene_spec_from_entries({"snr_db": "inf"})
        assert np.isinf(spec.snr_db)


class TestSimulate:
    def test_writes_components_and_manifest(self, scene_dir):
        for name in ("y", "x_e", "x_r", "v", "source"):
            assert (scene_dir / f"{name}.wav").exists()
        rate, y = read_wav(scene_dir / "y.wav")
        assert rate == 16000 and y.shape[0] == 8
        manifest = json.loads((scene_dir / "manifest.json").read_text())
        assert manifest["seed"] == 11
        assert manifest["timings_s"]

    def test_components_sum_to_mixture(self, scene_dir):
        _, y = read_wav(scene_dir / "y.wav")
        total = sum(read_wav(scene_dir / f"{n}.wav")[1]
                    for n in ("x_e", "x_r", "v"))
        # float32 storage bounds the agreement
        assert np.abs(y - total).max() < 1e-6

    def test_same_seed_identical_files(self, tmp_path):
        spec = tmp_path / "scene.cfg"
        spec.write_text(SCENE_CFG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", str(spec), str(out1)]) == 0
        assert main(["simulate", str(spec), str(out2)]) == 0
        a = (out1 / "y.wav").read_bytes()
        assert a == (out2 / "y.wav").read_bytes()

    def test_env_seed_override(self, tmp_path):
        spec = tmp_path / "scene.cfg"
        spec.write_text(SCENE_CFG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", str(spec), str(out1)]) == 0
        os.environ["DEREV_SEED"] = "999"
        try:
            assert main(["simulate", str(spec), str(out2)]) == 0
        finally:
            del os.environ["DEREV_SEED"]
        manifest = json.loads((out2 / "manifest.json").read_text())
        assert manifest["seed"] == 999
        assert (out1 / "y.wav").read_bytes() != (out2 / "y.wav").read_bytes()

    def test_user_supplied_source_wav(self, tmp_path):
        rng = np.random.default_rng(0)
        src_path = tmp_path / "speech.wav"
        write_wav(src_path, 16000, rng.standard_normal(16000) * 0.1)
        spec = tmp_path / "scene.cfg"
        spec.write_text(SCENE_CFG + f"source_wav = {src_path}\n")
        out = tmp_path / "out"
        assert main(["simulate", str(spec), str(out)]) == 0
        _, source = read_wav(out / "source.wav")
        _, original = read_wav(src_path)
        np.testing.assert_array_equal(source, original)
        manifest = json.loads((out / "manifest.json").read_text())
        assert str(src_path) in manifest["inputs"]

    def test_defaults_give_8ch_16k(self, tmp_path):
        spec = tmp_path / "scene.cfg"
        spec.write_text("duration = 0.7\n")
        out = tmp_path / "out"
        assert main(["simulate", str(spec), str(out)]) == 0
        rate, y = read_wav(out / "y.wav")
        assert rate == 16000 and y.shape[0] == 8

    def test_invalid_t60_rejected(self, tmp_path):
        spec = tmp_path / "scene.cfg"
        spec.write_text(SCENE_CFG.replace("t60 = 0.5", "t60 = 3.0"))
        assert main(["simulate", str(spec), str(tmp_path / "out")]) == 2

    def test_missing_spec_file(self, tmp_path):
        assert main(["simulate", str(tmp_path / "nope.cfg"),
                     str(tmp_path / "out")]) == 2


class TestEnhance:
    def test_full_mode_and_trace(self, tmp_path, scene_dir):
        cfg = tmp_path / "pipe.cfg"
        cfg.write_text(PIPELINE_CFG)
        out = tmp_path / "enhanced.wav"
        trace_path = tmp_path / "trace.npz"
        code = main(["enhance", str(cfg), str(scene_dir / "y.wav"), str(out),
                     "--trace", str(trace_path)])
        assert code == 0
        rate, enhanced = read_wav(out)
        assert rate == 16000 and enhanced.shape[0] == 1
        trace = load_trace(trace_path)
        assert trace.mode == "full"
        assert trace.beam_weights.shape[2] == 8
        manifest = json.loads(
            out.with_suffix(".manifest.json").read_text())
        assert "enhance" in manifest["timings_s"]

    def test_passthrough_reproduces_reference(self, tmp_path, scene_dir):
        cfg = tmp_path / "pipe.cfg"
        cfg.write_text(PIPELINE_CFG)
        out = tmp_path / "pt.wav"
        code = main(["enhance", str(cfg), str(scene_dir / "y.wav"), str(out),
                     "--mode", "passthrough"])
        assert code == 0
        _, y = read_wav(scene_dir / "y.wav")
        _, enhanced = read_wav(out)
        assert np.abs(enhanced[0] - y[0]).max() < 1e-6

    def test_channel_mismatch_is_input_error(self, tmp_path, scene_dir):
        cfg = tmp_path / "pipe.cfg"
        cfg.write_text(PIPELINE_CFG.replace("mic_count = 8", "mic_count = 4"))
        code = main(["enhance", str(cfg), str(scene_dir / "y.wav"),
                     str(tmp_path / "x.wav")])
        assert code == 2

    def test_missing_input_exit_2(self, tmp_path):
        cfg = tmp_path / "pipe.cfg"
        cfg.write_text(PIPELINE_CFG)
        assert main(["enhance", str(cfg), str(tmp_path / "missing.wav"),
                     str(tmp_path / "x.wav")]) == 2


class TestEvaluate:
    @pytest.fixture()
    def enhanced(self, tmp_path, scene_dir):
        cfg = tmp_path / "pipe.cfg"
        cfg.write_text(PIPELINE_CFG)
        out = tmp_path / "enhanced.wav"
        trace_path = tmp_path / "trace.npz"
        assert main(["enhance", str(cfg), str(scene_dir / "y.wav"), str(out),
                     "--trace", str(trace_path)]) == 0
        return out, trace_path

    def test_report_written(self, tmp_path, scene_dir, enhanced):
        out, trace_path = enhanced
        report = tmp_path / "report.csv"
        code = main(["evaluate", str(scene_dir), str(trace_path), str(out),
                     "-o", str(report)])
        assert code == 0
        text = report.read_text()
        assert text.splitlines()[0] == "key,value"
        assert "delta_sir_db," in text
        # the enhanced file is optional: the trace alone suffices
        assert main(["evaluate", str(scene_dir), str(trace_path),
                     "-o", str(tmp_path / "r2.csv")]) == 0

    def test_passthrough_trace_zero_delta(self, tmp_path, scene_dir):
        cfg = tmp_path / "pipe.cfg"
        cfg.write_text(PIPELINE_CFG)
        out = tmp_path / "pt.wav"
        trace_path = tmp_path / "pt_trace.npz"
        assert main(["enhance", str(cfg), str(scene_dir / "y.wav"), str(out),
                     "--mode", "passthrough", "--trace", str(trace_path)]) == 0
        report = tmp_path / "report.csv"
        assert main(["evaluate", str(scene_dir), str(trace_path), str(out),
                     "-o", str(report)]) == 0
        rows = dict(line.split(",") for line in
                    report.read_text().splitlines()[1:])
        assert abs(float(rows["delta_sir_db"])) < 0.1

    def test_mismatched_enhanced_file_exit_3(self, tmp_path, scene_dir,
                                             enhanced):
        out, trace_path = enhanced
        bogus = tmp_path / "bogus.wav"
        rate, data = read_wav(out)
        write_wav(bogus, rate, data * 0.5)
        code = main(["evaluate", str(scene_dir), str(trace_path), str(bogus),
                     "-o", str(tmp_path / "r.csv")])
        assert code == 3


class TestSweep:
    def test_small_grid(self, tmp_path):
        grid = tmp_path / "grid.cfg"
        grid.write_text(
            "t60_grid = 0.4,0.8\n"
            "modes = passthrough,mvdr_only\n"
            "seeds = 1,2\n"
            "duration = 1.0\n"
            "snr_db = 10\n"
            "doa_azimuth = 0.7853981633974483\n"
            "mic_count = 8\n"
            "mic_spacing = 0.04\n"
            "sample_rate = 16000\n"
        )
        out = tmp_path / "table.csv"
        assert main(["sweep", str(grid), "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("t60,mode,seeds,")
        assert len(lines) == 1 + 2 * 2  # grid rows
        manifest = json.loads(out.with_suffix(".manifest.json").read_text())
        assert manifest["command"] == "sweep"

    def test_unknown_mode_rejected(self, tmp_path):
        grid = tmp_path / "grid.cfg"
        grid.write_text("modes = warp\nduration = 1.0\n")
        assert main(["sweep", str(grid), "-o", str(tmp_path / "t.csv")]) == 2


class TestSpectrogram:
    def test_matrix_export(self, tmp_path, scene_dir):
        out = tmp_path / "spec.csv"
        assert main(["spectrogram", str(scene_dir / "y.wav"), str(out)]) == 0
        rows = out.read_text().splitlines()
        cols = rows[0].count(",") + 1
        assert cols == 257
        values = np.array([[float(v) for v in row.split(",")]
                           for row in rows])
        peak = values.max()
        assert values.min() >= peak - 80.0 - 1e-6  # dynamic-range floor
