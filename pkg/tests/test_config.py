import math

import pytest

from scanfield.config import RunConfig, config_text, load_config, parse_config
from scanfield.targets import SupervisionMode


def test_defaults_mirror_training_formulas():
    cfg = RunConfig()
    assert cfg.encoding_bands == 30
    assert cfg.encoding_base_freq == math.pi
    assert cfg.hidden_width == 128 and cfg.hidden_layers == 4
    assert cfg.samples_per_ray == 40
    assert cfg.trunc_band == 0.2 and cfg.weight_gamma == 3.0
    assert cfg.learn_rate == 1e-4 and cfg.weight_decay == 1e-2
    assert cfg.epochs == 10 and cfg.batch_rays == 512
    assert cfg.mode == "curvature"


def test_parse_overrides_defaults():
    cfg = parse_config("epochs = 3\nmode = ray\n# comment\n\nbeams=12\n")
    assert cfg.epochs == 3
    assert cfg.supervision_mode() is SupervisionMode.RAY_DISTANCE
    assert cfg.beams == 12
    assert cfg.hidden_width == 128  # untouched default


def test_parse_rejects_unknown_keys_with_line_numbers():
    with pytest.raises(ValueError, match="line 2.*warp_speed"):
        parse_config("epochs = 3\nwarp_speed = 11\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_config("this is not an assignment\n")


def test_parse_rejects_bad_values():
    with pytest.raises(ValueError, match="epochs"):
        parse_config("epochs = three\n")
    with pytest.raises(ValueError, match="boolean"):
        parse_config("drop_behind_origin = maybe\n")
    with pytest.raises(ValueError, match="mode"):
        parse_config("mode = psychic\n")


def test_validation_bounds():
    with pytest.raises(ValueError, match="positive"):
        RunConfig(epochs=0)
    with pytest.raises(ValueError, match="nonnegative"):
        RunConfig(eikonal_weight=-0.1)
    with pytest.raises(ValueError, match="samples_per_ray"):
        RunConfig(samples_per_ray=1)
    with pytest.raises(ValueError, match="fov"):
        RunConfig(fov=7.0)


def test_round_trip_through_text():
    cfg = RunConfig(epochs=2, learn_rate=3e-4, drop_behind_origin=True, mode="dcn")
    back = parse_config(config_text(cfg))
    assert back == cfg


def test_overrides_dict():
    cfg = parse_config("epochs = 5\n", overrides={"seed": 9, "mode": "ray"})
    assert cfg.seed == 9 and cfg.epochs == 5 and cfg.mode == "ray"
    with pytest.raises(ValueError, match="unknown"):
        parse_config("", overrides={"nope": 1})


def test_load_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("beams = 48\nscan_noise = 0.02\n")
    cfg = load_config(p)
    assert cfg.beams == 48 and cfg.scan_noise == 0.02


def test_adapters_carry_values():
    cfg = RunConfig(
        trunc_band=0.5, weight_gamma=2.0, smooth_neighbors=6,
        learn_rate=2e-4, epochs=4, curvature_warmup=7,
        mcl_particles=123, mcl_sigma_z=0.25, seed=3,
    )
    w = cfg.loss_weights()
    assert w.tau == 0.5 and w.gamma == 2.0 and w.knn == 6
    o = cfg.optim()
    assert o.lr == 2e-4 and o.epochs == 4 and o.warmup_steps == 7 and o.seed == 3
    m = cfg.mcl()
    assert m.n_particles == 123 and m.sigma_z == 0.25 and m.seed == 3
