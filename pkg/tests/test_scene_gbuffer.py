import numpy as np
import pytest

from radcache.gbuffer import render_gbuffer
from radcache.scene import Camera, CameraRig, SceneError, load_obj, scene_from_dict

from conftest import asset


def tri_scene(tmp_path, **camera_overrides):
    obj = tmp_path / "tri.obj"
    obj.write_text("v -1 -1 0\nv 1 -1 0\nv 0 1 0\nf 1 2 3\n")
    camera = {
        "width": 32,
        "height": 32,
        "fov_y": 0.8,
        "position": [0.0, 0.0, 3.0],
        "look_at": [0.0, 0.0, 0.0],
    }
    camera.update(camera_overrides)
    doc = {
        "meshes": [{"name": "tri", "obj": "tri.obj"}],
        "materials": [{"name": "m", "albedo": [0.4, 0.5, 0.6]}],
        "instances": [{"mesh": "tri", "material": "m"}],
        "camera": camera,
    }
    return doc


# ---------------------------------------------------------------------------
# camera
# ---------------------------------------------------------------------------


def test_project_inverts_pixel_rays(cornell_scene, rng):
    cam = cornell_scene.camera_at(0)
    px = rng.integers(0, cam.width, 64)
    py = rng.integers(0, cam.height, 64)
    dirs = cam.pixel_rays(px, py)
    t = rng.uniform(0.5, 8.0, 64)
    points = cam.position + dirs * t[:, None]
    pix, dist, valid = cam.project(points)
    assert valid.all()
    np.testing.assert_allclose(pix[:, 0], px, atol=1e-9)
    np.testing.assert_allclose(pix[:, 1], py, atol=1e-9)
    np.testing.assert_allclose(dist, t, atol=1e-9)


def test_project_rejects_points_behind_camera(cornell_scene):
    cam = cornell_scene.camera_at(0)
    behind = cam.position + cam.rotation[2] * 2.0  # +back axis
    _, _, valid = cam.project(behind[None])
    assert not valid[0]


def test_camera_rig_interpolates_keyframes():
    k0 = {"position": [0.0, 0.0, 4.0], "look_at": [0.0, 0.0, 0.0], "up": [0, 1, 0], "fov_y": 0.8}
    k1 = {"position": [2.0, 0.0, 4.0], "look_at": [0.0, 0.0, 0.0], "up": [0, 1, 0], "fov_y": 1.0}
    rig = CameraRig(keyframes=[(0, k0), (10, k1)], width=16, height=16)
    np.testing.assert_allclose(rig.camera_at(0).position, k0["position"])
    np.testing.assert_allclose(rig.camera_at(10).position, k1["position"])
    np.testing.assert_allclose(rig.camera_at(99).position, k1["position"])
    mid = rig.camera_at(5)
    np.testing.assert_allclose(mid.position, [1.0, 0.0, 4.0])
    np.testing.assert_allclose(mid.fov_y, 0.9)


def test_camera_up_parallel_to_view_rejected():
    with pytest.raises(SceneError):
        Camera.look_at([0, 0, 0], [0, 1, 0], [0, 1, 0], 0.8, 8, 8)


# ---------------------------------------------------------------------------
# scene validation
# ---------------------------------------------------------------------------


def test_scene_root_must_be_object():
    with pytest.raises(SceneError):
        scene_from_dict([1, 2, 3])


def test_scene_missing_camera(tmp_path):
    doc = tri_scene(tmp_path)
    del doc["camera"]
    with pytest.raises(SceneError):
        scene_from_dict(doc, base_dir=str(tmp_path))


def test_scene_unknown_mesh_reference(tmp_path):
    doc = tri_scene(tmp_path)
    doc["instances"][0]["mesh"] = "nope"
    with pytest.raises(SceneError):
        scene_from_dict(doc, base_dir=str(tmp_path))


def test_scene_unknown_material_reference(tmp_path):
    doc = tri_scene(tmp_path)
    doc["instances"][0]["material"] = "nope"
    with pytest.raises(SceneError):
        scene_from_dict(doc, base_dir=str(tmp_path))


def test_scene_albedo_out_of_range(tmp_path):
    doc = tri_scene(tmp_path)
    doc["materials"][0]["albedo"] = [1.5, 0.0, 0.0]
    with pytest.raises(SceneError):
        scene_from_dict(doc, base_dir=str(tmp_path))


def test_scene_no_instances(tmp_path):
    doc = tri_scene(tmp_path)
    doc["instances"] = []
    with pytest.raises(SceneError):
        scene_from_dict(doc, base_dir=str(tmp_path))


def test_scene_zero_area_light(tmp_path):
    doc = tri_scene(tmp_path)
    p = [0.0, 0.0, 0.0]
    doc["lights"] = [{"kind": "area", "radiance": [1, 1, 1], "triangles": [[p, p, p]]}]
    with pytest.raises(SceneError):
        scene_from_dict(doc, base_dir=str(tmp_path))


def test_scene_unknown_light_kind(tmp_path):
    doc = tri_scene(tmp_path)
    doc["lights"] = [{"kind": "laser"}]
    with pytest.raises(SceneError):
        scene_from_dict(doc, base_dir=str(tmp_path))


@pytest.mark.parametrize(
    "body",
    [
        "v 1 2\nf 1 1 1\n",  # short vertex
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n",  # face index out of range
        "",  # no geometry
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n",  # face with two vertices
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 -2 -3\n",  # negative indices
    ],
)
def test_obj_parse_errors(tmp_path, body):
    bad = tmp_path / "bad.obj"
    bad.write_text(body)
    with pytest.raises(SceneError):
        load_obj(str(bad))


# ---------------------------------------------------------------------------
# G-buffer
# ---------------------------------------------------------------------------


def test_gbuffer_static_scene_has_zero_motion(cornell_scene):
    gbuf = render_gbuffer(cornell_scene, 0)
    live = ~gbuf.sky
    assert np.abs(gbuf.motion[live]).max() < 1e-9


def test_gbuffer_normals_face_camera(cornell_scene):
    gbuf = render_gbuffer(cornell_scene, 0)
    live = ~gbuf.sky
    ndotv = np.sum(gbuf.normal * gbuf.view_dir, axis=-1)
    assert np.all(ndotv[live] <= 1e-12)


def test_gbuffer_depth_is_euclidean_distance(cornell_scene):
    gbuf = render_gbuffer(cornell_scene, 0)
    cam = cornell_scene.camera_at(0)
    live = ~gbuf.sky
    d = np.linalg.norm(gbuf.position - cam.position, axis=-1)
    np.testing.assert_allclose(d[live], gbuf.depth[live], atol=1e-9)


def test_gbuffer_sky_mask_and_materials(tmp_path):
    scene = scene_from_dict(tri_scene(tmp_path), base_dir=str(tmp_path))
    gbuf = render_gbuffer(scene, 0)
    assert gbuf.sky.any() and (~gbuf.sky).any()
    assert np.isinf(gbuf.depth[gbuf.sky]).all()
    assert (gbuf.instance[gbuf.sky] == -1).all()
    live = gbuf.albedo[~gbuf.sky]
    np.testing.assert_allclose(live, np.broadcast_to([0.4, 0.5, 0.6], live.shape))


def test_gbuffer_emissive_lamp_pixels(cornell_scene):
    gbuf = render_gbuffer(cornell_scene, 0)
    assert gbuf.emissive.max() > 1.0  # the ceiling lamp is visible
