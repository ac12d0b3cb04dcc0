"""Configuration validation and end-to-end command-line runs."""

import numpy as np
import pytest

from psbp.cli import main
from psbp.config import load_config, parse_config
from psbp.core import ConfigError
from psbp.fileio import load_image, load_mask, read_json, read_pfm, write_json
from psbp.pipeline import reprojection_error


def sphere_render_payload(out):
    return {
        "mode": "render",
        "out": str(out),
        "intrinsics": {
            "focal_length": 1.0,
            "pixel_pitch": 0.009375,
            "principal_point": [31.5, 31.5],
        },
        "lights": [
            {"direction": [0, 0, 1], "diffuse_intensity": 1.2, "specular_intensity": 1.2},
            {"direction": [1, 0, 2], "diffuse_intensity": 1.2, "specular_intensity": 1.2},
            {"direction": [0, 1, 2], "diffuse_intensity": 1.2, "specular_intensity": 1.2},
        ],
        "material": {"diffuse": 0.5, "specular": 0.5, "shininess": 150.0},
        "scene": {"type": "sphere", "size": [64, 64], "center": [0, 0, 4], "radius": 1.0},
    }


def reconstruct_payload(render_dir, out, method="bp-pps"):
    payload = sphere_render_payload(out)
    payload["mode"] = "reconstruct"
    payload["method"] = method
    payload["images"] = [str(render_dir / f"image_{i}.pgm") for i in (1, 2, 3)]
    del payload["scene"]
    return payload


def evaluate_payload(render_dir, estimate_dir, out):
    payload = sphere_render_payload(out)
    payload["mode"] = "evaluate"
    payload["images"] = [str(render_dir / f"image_{i}.pgm") for i in (1, 2, 3)]
    payload["estimate_dir"] = str(estimate_dir)
    payload["ground_truth"] = str(render_dir / "depth_gt.pfm")
    del payload["scene"]
    return payload


# ------------------------------------------------------------- validation

def test_parse_minimal_render_config(tmp_path):
    cfg = parse_config(sphere_render_payload(tmp_path / "out"), base_dir=tmp_path)
    assert cfg.mode == "render"
    assert cfg.centerize is True
    assert cfg.scene.type == "sphere"
    assert cfg.scene.size == (64, 64)
    assert cfg.material.k_s == 0.5
    assert len(cfg.lights) == 3
    assert cfg.intrinsics.h_x == 0.009375


def test_unknown_top_level_key_rejected(tmp_path):
    payload = sphere_render_payload(tmp_path)
    payload["solver"] = "fast"
    with pytest.raises(ConfigError) as exc:
        parse_config(payload)
    assert "solver" in str(exc.value)


def test_images_field_errors_name_the_field(tmp_path):
    payload = reconstruct_payload(tmp_path, tmp_path / "out")
    payload["images"] = payload["images"][:2]
    with pytest.raises(ConfigError) as exc:
        parse_config(payload)
    assert "'images'" in str(exc.value)


def test_mode_and_method_choices(tmp_path):
    payload = sphere_render_payload(tmp_path)
    payload["mode"] = "train"
    with pytest.raises(ConfigError):
        parse_config(payload)
    payload = reconstruct_payload(tmp_path, tmp_path)
    payload["method"] = "bp-direct"
    with pytest.raises(ConfigError):
        parse_config(payload)


def test_material_required_for_blinn_phong_methods(tmp_path):
    payload = reconstruct_payload(tmp_path, tmp_path / "out")
    del payload["material"]
    with pytest.raises(ConfigError) as exc:
        parse_config(payload)
    assert "'material'" in str(exc.value)
    payload["method"] = "lambert-pps"
    parse_config(payload)  # closed form needs no reflectance constants


def test_invalid_nested_values_are_reported(tmp_path):
    payload = sphere_render_payload(tmp_path)
    payload["lights"][0]["direction"] = [0, 0]
    with pytest.raises(ConfigError) as exc:
        parse_config(payload)
    assert "direction" in str(exc.value)

    payload = sphere_render_payload(tmp_path)
    payload["material"] = {"diffuse": 0.8, "specular": 0.8}
    with pytest.raises(ConfigError) as exc:
        parse_config(payload)
    assert "'material'" in str(exc.value)

    payload = sphere_render_payload(tmp_path)
    payload["intrinsics"]["focal_length"] = True
    with pytest.raises(ConfigError):
        parse_config(payload)

    payload = sphere_render_payload(tmp_path)
    payload["scene"]["radius"] = -1.0
    with pytest.raises(ConfigError) as exc:
        parse_config(payload)
    assert "radius" in str(exc.value)


def test_load_config_resolves_relative_paths_and_overrides(tmp_path):
    payload = reconstruct_payload(tmp_path, "result")
    payload["images"] = ["image_1.pgm", "image_2.pgm", "image_3.pgm"]
    cfg_path = tmp_path / "job.json"
    write_json(cfg_path, payload)
    cfg = load_config(cfg_path, overrides={"method": "lambert-pps", "out": None})
    assert cfg.method == "lambert-pps"
    assert cfg.out == tmp_path / "result"
    assert cfg.images[0] == tmp_path / "image_1.pgm"
    cfg2 = load_config(cfg_path, overrides={"centerize": False})
    assert cfg2.centerize is False


def test_load_config_bad_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="ascii")
    with pytest.raises(ConfigError):
        load_config(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]", encoding="ascii")
    with pytest.raises(ConfigError):
        load_config(arr)


# ---------------------------------------------------------------- pipeline

@pytest.fixture(scope="module")
def rendered_sphere(tmp_path_factory):
    out = tmp_path_factory.mktemp("render")
    assert main(["render", "--config", _write_cfg(out, sphere_render_payload(out))]) == 0
    return out


def _write_cfg(directory, payload):
    path = directory / "config.json"
    write_json(path, payload)
    return str(path)


def test_render_artifacts(rendered_sphere):
    out = rendered_sphere
    for name in ("image_1.pgm", "image_2.pgm", "image_3.pgm", "depth_gt.pfm",
                 "mask.pgm", "report.json", "timings.json"):
        assert (out / name).exists()
    report = read_json(out / "report.json")
    assert report["size"] == [64, 64]
    assert report["pixels_in_mask"] > 1000
    mask = load_mask(out / "mask.pgm")
    img = load_image(out / "image_1.pgm")
    assert img.shape == (64, 64)
    assert np.all(img[~mask] == 0.0)
    depth = read_pfm(out / "depth_gt.pfm")
    assert depth[mask].min() > 2.9


def test_render_lambertian_model_equals_zero_specular(tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    pa = sphere_render_payload(a_dir)
    pa["material"] = {"diffuse": 0.5, "specular": 0.0, "shininess": 150.0}
    pb = sphere_render_payload(b_dir)
    pb["material"] = {"diffuse": 0.5}
    pb["scene"]["model"] = "lambertian"
    assert main(["render", "--config", _write_cfg(tmp_path, pa)]) == 0
    assert main(["render", "--config", _write_cfg(tmp_path, pb)]) == 0
    for i in (1, 2, 3):
        assert (a_dir / f"image_{i}.pgm").read_bytes() == (b_dir / f"image_{i}.pgm").read_bytes()


def test_cli_closed_loop_reconstruct_and_evaluate(rendered_sphere, tmp_path):
    recon = tmp_path / "recon"
    assert main(["reconstruct", "--config",
                 _write_cfg(tmp_path, reconstruct_payload(rendered_sphere, recon))]) == 0
    report = read_json(recon / "report.json")
    assert report["method"] == "bp-pps"
    assert report["gradient_kind"] == "log-depth"
    assert report["solved_pixels"] > 0.8 * report["input_pixels"]
    for name in ("grad_x.pfm", "grad_y.pfm", "depth.pfm", "mask.pgm"):
        assert (recon / name).exists()

    ev = tmp_path / "eval"
    assert main(["evaluate", "--config",
                 _write_cfg(tmp_path, evaluate_payload(rendered_sphere, recon, ev))]) == 0
    result = read_json(ev / "evaluation.json")
    assert result["method"] == "bp-pps"
    assert result["mse_normalized"] < 0.01
    assert result["pixels"]["joint"] > 1000
    assert len(result["mse_reprojection"]) == 3


def test_cli_ppn_loop(rendered_sphere, tmp_path):
    recon = tmp_path / "recon"
    cfgp = reconstruct_payload(rendered_sphere, recon, method="bp-ppn")
    assert main(["reconstruct", "--config", _write_cfg(tmp_path, cfgp)]) == 0
    report = read_json(recon / "report.json")
    assert report["gradient_kind"] == "depth"
    assert (recon / "normals.pfm").exists()
    depth = read_pfm(recon / "depth.pfm")
    mask = load_mask(recon / "mask.pgm")
    assert depth[mask].min() >= 1.0  # shifted to a positive floor

    ev = tmp_path / "eval"
    assert main(["evaluate", "--config",
                 _write_cfg(tmp_path, evaluate_payload(rendered_sphere, recon, ev))]) == 0
    result = read_json(ev / "evaluation.json")
    assert result["mse_normalized"] < 0.02


def test_cli_lambert_ppn_writes_albedo(rendered_sphere, tmp_path):
    recon = tmp_path / "recon"
    cfgp = reconstruct_payload(rendered_sphere, recon, method="lambert-ppn")
    del cfgp["material"]
    assert main(["reconstruct", "--config", _write_cfg(tmp_path, cfgp)]) == 0
    assert (recon / "albedo.pfm").exists()
    assert (recon / "normals.pfm").exists()


def test_reconstruct_outputs_are_deterministic(rendered_sphere, tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["reconstruct", "--config",
                     _write_cfg(tmp_path, reconstruct_payload(rendered_sphere, out))]) == 0
        outs.append(out)
    for name in ("grad_x.pfm", "grad_y.pfm", "depth.pfm", "mask.pgm", "report.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_no_centerize_flag_plumbs_through(rendered_sphere, tmp_path):
    recon = tmp_path / "recon"
    cfgp = reconstruct_payload(rendered_sphere, recon, method="lambert-pps")
    assert main(["reconstruct", "--no-centerize", "--config",
                 _write_cfg(tmp_path, cfgp)]) == 0
    report = read_json(recon / "report.json")
    assert report["centerize"] is False


def test_conditioning_mode_artifacts(tmp_path):
    payload = sphere_render_payload(tmp_path / "out")
    payload["mode"] = "conditioning"
    payload["conditioning"] = {"size": [32, 24]}
    del payload["scene"]
    del payload["material"]
    assert main(["conditioning", "--config", _write_cfg(tmp_path, payload)]) == 0
    out = tmp_path / "out"
    for i in range(1, 12):
        assert (out / f"indicator_{i:02d}.pgm").exists()
    report = read_json(out / "conditioning.json")
    assert report["size"] == [32, 24]
    assert report["non_coplanar"] is True
    assert len(report["flagged_counts"]) == 11


def test_reprojection_error_vanishes_on_ground_truth(rendered_sphere):
    from psbp.core import input_mask
    from psbp.render import make_sphere_depth, log_depth_gradients

    cfg = parse_config(sphere_render_payload(rendered_sphere), base_dir=rendered_sphere)
    depth = make_sphere_depth(64, 64, cfg.intrinsics, (0, 0, 4.0), 1.0)
    grad = log_depth_gradients(depth, cfg.intrinsics)
    images = [load_image(rendered_sphere / f"image_{i}.pgm") for i in (1, 2, 3)]
    usable = input_mask(images, high=0.999)  # drop clipped specular peaks
    errors = reprojection_error(grad, images, cfg.lights, cfg.material, cfg.intrinsics,
                                model="blinn-phong", mask=usable)
    # file quantization is the only error source left
    assert max(errors) < 1e-8


def test_cli_exit_codes(tmp_path):
    # 1: unreadable / invalid configuration
    assert main(["render", "--config", str(tmp_path / "nope.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{]", encoding="ascii")
    assert main(["render", "--config", str(bad)]) == 1
    payload = sphere_render_payload(tmp_path / "out")
    payload["extra"] = 1
    assert main(["render", "--config", _write_cfg(tmp_path, payload)]) == 1

    # 1: reconstruct pointed at missing images
    recon_cfg = reconstruct_payload(tmp_path / "nowhere", tmp_path / "out")
    assert main(["reconstruct", "--config", _write_cfg(tmp_path, recon_cfg)]) == 1

    # 2: numerical failure — all-black inputs leave nothing to integrate
    from psbp.fileio import save_image

    dark = tmp_path / "dark"
    dark.mkdir()
    for i in (1, 2, 3):
        save_image(dark / f"image_{i}.pgm", np.zeros((16, 16)))
    recon_cfg = reconstruct_payload(dark, tmp_path / "out2")
    assert main(["reconstruct", "--config", _write_cfg(tmp_path, recon_cfg)]) == 2
