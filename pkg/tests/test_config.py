import math

import pytest

from emctc.config import DEFAULTS, REGISTRY, Config, ConfigError, load_config
from emctc.corpus import GenSpec
from emctc.decoder import DecoderConfig
from emctc.model import LrSchedule


class TestConfig:
    def test_defaults(self):
        c = Config()
        for k, v in DEFAULTS.items():
            assert c[k] == v
        assert c["vocab_size"] == 50 and c["label_beam"] == 1

    def test_file_and_overrides(self, tmp_path):
        (tmp_path / "c.cfg").write_text("# toy\nvocab_size = 12\nframes_per_word = 2,4  # range\n\npeak=0.1\n")
        c = load_config(tmp_path / "c.cfg", ["peak=0.2", "overlap_tolerance=inf", "word_beam=none"])
        assert c.build(GenSpec).frames_per_word == (2, 4)
        assert c.build(GenSpec).vocab_size == 12
        assert c.build(LrSchedule).peak == 0.2
        d = c.build(DecoderConfig)
        assert d.overlap_tolerance == math.inf and d.word_beam is None

    def test_hidden_list(self):
        c = Config()
        c.update_pairs(["hidden=8,4"])
        assert c["hidden"] == (8, 4)

    @pytest.mark.parametrize("text,msg", [("nope = 1", "unknown"), ("vocab_size = x", "bad value"),
                                          ("just words", "expected")])
    def test_errors_name_line(self, text, msg):
        c = Config()
        with pytest.raises(ConfigError, match=f"<config>:1: .*{msg}"):
            c.update_text(text)

    def test_invalid_dataclass_values(self):
        c = Config({"input_beam": "0"})
        with pytest.raises(ConfigError, match="DecoderConfig"):
            c.build(DecoderConfig)

    def test_bad_pair(self):
        with pytest.raises(ConfigError):
            Config().update_pairs(["novalue"])

    def test_dump_round_trip(self):
        c = Config({"peak": "0.3", "hidden": "5", "duration_init": "0.2"})
        d = Config()
        d.update_text(c.dump())
        assert d.values == c.values

    def test_registry_covers_sections(self):
        for key in ("input_beam", "batch_size", "p1", "offset_limit", "noise_std", "count", "lm"):
            assert key in REGISTRY
