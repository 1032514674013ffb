use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_pose(rng: &mut ChaCha8Rng, joints: usize, spread: f64) -> FullPose {
    FullPose::new(
        (0..joints)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn random_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn max_dist(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// Independent LBS: per-joint 4×4 world matrices built by walking each joint's
/// ancestor chain, then a per-vertex weighted sum of transformed points.
fn brute_force_skin(model: &BodyModelDef, pose: &FullPose, beta: &[f64], psi: &[f64]) -> Vec<Vector3<f64>> {
    let shaped = model.shaped_vertices(beta, psi).unwrap();
    let reg = model.joint_regressor();
    let rest: Vec<Vector3<f64>> = (0..model.joint_count())
        .map(|j| {
            let mut acc = Vector3::zeros();
            for v in 0..model.vertex_count() {
                acc += reg[(j, v)] * shaped[v];
            }
            acc
        })
        .collect();
    let world: Vec<Matrix4<f64>> = (0..model.joint_count())
        .map(|j| {
            let mut chain = vec![j];
            while let Some(p) = model.tree().parent(*chain.last().unwrap()) {
                chain.push(p);
            }
            let mut m = Matrix4::<f64>::identity();
            for &k in chain.iter().rev() {
                let offset = match model.tree().parent(k) {
                    Some(p) => rest[k] - rest[p],
                    None => rest[k],
                };
                let r = rodrigues(pose.joint(k));
                let local = match model.tree().parent(k) {
                    Some(_) => homogeneous(&r, &offset),
                    None => homogeneous(&r, &(r * offset)),
                };
                m *= local;
            }
            m * homogeneous(&Matrix3::identity(), &-rest[j])
        })
        .collect();
    let w = model.skinning_weights();
    shaped
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let h = Vector4::new(p.x, p.y, p.z, 1.0);
            let mut out = Vector4::zeros();
            for (j, m) in world.iter().enumerate() {
                out += w[(v, j)] * (m * h);
            }
            out.xyz()
        })
        .collect()
}

fn one_joint_model(template: Vector3<f64>, basis: Vec<f64>) -> BodyModelDef {
    BodyModelDef::new(ModelArrays {
        template: vec![template],
        shape_basis: DMatrix::from_row_slice(3, basis.len() / 3, &basis),
        num_shape: basis.len() / 3,
        num_expression: 0,
        pose_corrective_basis: None,
        joint_regressor: DMatrix::from_element(1, 1, 1.0),
        skinning_weights: DMatrix::from_element(1, 1, 1.0),
        tree: KinematicTree::new(&[-1]).unwrap(),
        part_masks: BTreeMap::new(),
        part_joint_masks: BTreeMap::new(),
    })
    .unwrap()
}

#[test]
fn zero_pose_gives_template() {
    let model = toy_model(&ToyModelConfig::smplx_layout(1)).unwrap();
    let out = model.skin(&FullPose::zeros(55), &[0.0; 10], &[0.0; 10]).unwrap();
    assert!(max_dist(&out, model.template()) < 1e-9);
}

#[test]
fn rest_joints_at_zero_shape() {
    let model = toy_model(&ToyModelConfig::smplx_layout(2)).unwrap();
    let joints = model.regress_rest_joints(&[0.0; 10], &[0.0; 10]).unwrap();
    let reg = model.joint_regressor();
    for (j, p) in joints.iter().enumerate() {
        let mut acc = Vector3::zeros();
        for (v, t) in model.template().iter().enumerate() {
            acc += reg[(j, v)] * t;
        }
        assert!((p - acc).norm() < 1e-12);
    }
}

#[test]
fn uniform_z_basis_shifts_joints() {
    let mut model = toy_model(&ToyModelConfig::smplx_layout(3)).unwrap();
    let mut arrays = model.arrays().clone();
    let v = arrays.template.len();
    arrays.shape_basis = DMatrix::from_fn(3 * v, 20, |r, c| if c == 0 && r % 3 == 2 { 5.0 } else { 0.0 });
    model = BodyModelDef::new(arrays).unwrap();
    let rest = model.regress_rest_joints(&[0.0; 10], &[0.0; 10]).unwrap();
    let mut beta = [0.0; 10];
    beta[0] = 1.0;
    let shifted = model.regress_rest_joints(&beta, &[0.0; 10]).unwrap();
    for (a, b) in rest.iter().zip(&shifted) {
        assert!((b - a - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
    }
}

#[test]
fn rest_joints_match_brute_force_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = toy_model(&ToyModelConfig::smplx_layout(4)).unwrap();
    let beta = random_coeffs(&mut rng, 10);
    let psi = random_coeffs(&mut rng, 10);
    let got = model.regress_rest_joints(&beta, &psi).unwrap();
    let basis = &model.arrays().shape_basis;
    let coeffs: Vec<f64> = beta.iter().chain(&psi).copied().collect();
    for j in 0..model.joint_count() {
        let mut want = [0.0; 3];
        for v in 0..model.vertex_count() {
            let w = model.joint_regressor()[(j, v)];
            for axis in 0..3 {
                let mut x = model.template()[v][axis];
                for (k, c) in coeffs.iter().enumerate() {
                    x += basis[(3 * v + axis, k)] * c;
                }
                want[axis] += w * x;
            }
        }
        assert!((got[j] - Vector3::from(want)).norm() < 1e-9);
    }
}

#[test]
fn coefficient_length_is_checked() {
    let model = toy_model(&ToyModelConfig::smplx_layout(5)).unwrap();
    assert!(matches!(
        model.regress_rest_joints(&[0.0; 9], &[0.0; 10]),
        Err(BodyModelError::DimensionMismatch { .. })
    ));
    assert!(matches!(
        model.skin(&FullPose::zeros(54), &[0.0; 10], &[0.0; 10]),
        Err(BodyModelError::DimensionMismatch { .. })
    ));
}

#[test]
fn one_joint_closed_form() {
    let model = one_joint_model(Vector3::new(10.0, 0.0, 0.0), vec![0.0, 0.0, 0.0]);
    let pose = FullPose::new(vec![Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)]).unwrap();
    let out = model.skin(&pose, &[0.0], &[]).unwrap();
    assert!((out[0] - Vector3::new(0.0, 10.0, 0.0)).norm() < 1e-12);
    let kp = model.model_keypoints(&pose, &[0.0], &[]).unwrap();
    assert!((kp[0] - Vector3::new(0.0, 10.0, 0.0)).norm() < 1e-12);
}

#[test]
fn skin_matches_brute_force_lbs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..5 {
        let model = toy_model(&ToyModelConfig::smplx_layout(seed)).unwrap();
        let pose = random_pose(&mut rng, 55, 0.8);
        let beta = random_coeffs(&mut rng, 10);
        let psi = random_coeffs(&mut rng, 10);
        let got = model.skin(&pose, &beta, &psi).unwrap();
        let want = brute_force_skin(&model, &pose, &beta, &psi);
        assert!(max_dist(&got, &want) < 1e-9);
    }
}

#[test]
fn keypoints_match_one_hot_virtual_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = toy_model(&ToyModelConfig::random_tree(12, 7)).unwrap();
    let pose = random_pose(&mut rng, 12, 1.0);
    let beta = random_coeffs(&mut rng, 10);
    let psi = random_coeffs(&mut rng, 10);
    let rest = base.regress_rest_joints(&beta, &psi).unwrap();

    // One virtual vertex per joint, sitting on the shaped rest joint and
    // skinned entirely to it; its basis rows reproduce the joint's shaping.
    let a = base.arrays();
    let j = base.joint_count();
    let mut arrays = a.clone();
    arrays.template = (0..j)
        .map(|k| {
            (0..base.vertex_count()).fold(Vector3::zeros(), |acc, v| {
                acc + a.joint_regressor[(k, v)] * a.template[v]
            })
        })
        .collect();
    arrays.shape_basis = DMatrix::from_fn(3 * j, 20, |r, c| {
        let (k, axis) = (r / 3, r % 3);
        (0..base.vertex_count())
            .map(|v| a.joint_regressor[(k, v)] * a.shape_basis[(3 * v + axis, c)])
            .sum()
    });
    arrays.skinning_weights = DMatrix::identity(j, j);
    arrays.joint_regressor = DMatrix::identity(j, j);
    arrays.part_masks.clear();
    let virtual_model = BodyModelDef::new(arrays).unwrap();
    assert!(max_dist(&virtual_model.regress_rest_joints(&beta, &psi).unwrap(), &rest) < 1e-9);

    let skinned = brute_force_skin(&virtual_model, &pose, &beta, &psi);
    let kp = base.model_keypoints(&pose, &beta, &psi).unwrap();
    assert!(max_dist(&kp, &skinned) < 1e-9);
}

#[test]
fn keypoint_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = toy_model(&ToyModelConfig::smplx_layout(8)).unwrap();
    let zero = FullPose::zeros(55);
    let beta = random_coeffs(&mut rng, 10);
    let rest = model.regress_rest_joints(&beta, &[0.0; 10]).unwrap();
    for src in [KeypointSource::Kinematic, KeypointSource::Mesh] {
        let kp = model.keypoints(src, &zero, &beta, &[0.0; 10]).unwrap();
        assert!(max_dist(&kp, &rest) < 1e-9);
    }
    let r = rodrigues(&Vector3::new(0.3, -1.1, 0.4));
    let mut pose = FullPose::zeros(55);
    pose.set_joint(0, Vector3::new(0.3, -1.1, 0.4)).unwrap();
    let kp = model.model_keypoints(&pose, &beta, &[0.0; 10]).unwrap();
    let rotated: Vec<_> = rest.iter().map(|p| r * p).collect();
    assert!(max_dist(&kp, &rotated) < 1e-9);
}

#[test]
fn pose_correctives_only_when_enabled() {
    let mut cfg = ToyModelConfig::smplx_layout(9);
    cfg.with_pose_correctives = true;
    let on = toy_model(&cfg).unwrap();
    let off = on.clone().with_pose_correctives(false);
    assert!(on.pose_correctives_enabled());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pose = random_pose(&mut rng, 55, 0.5);
    let a = on.skin(&pose, &[0.0; 10], &[0.0; 10]).unwrap();
    let b = off.skin(&pose, &[0.0; 10], &[0.0; 10]).unwrap();
    assert!(max_dist(&a, &b) > 1e-3);
    let zero = FullPose::zeros(55);
    let a = on.skin(&zero, &[0.0; 10], &[0.0; 10]).unwrap();
    assert!(max_dist(&a, on.template()) < 1e-9);
}

#[test]
fn pose_validation() {
    assert!(matches!(
        FullPose::new(vec![Vector3::new(7.0, 0.0, 0.0)]),
        Err(BodyModelError::InvalidPose(_))
    ));
    assert!(matches!(
        FullPose::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)]),
        Err(BodyModelError::NonFinite(_))
    ));
    let p = FullPose::from_flat(&[0.1, 0.2, 0.3, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(p.to_flat(), vec![0.1, 0.2, 0.3, 0.0, 0.0, 0.0]);
    assert!(FullPose::from_flat(&[0.0; 4]).is_err());
}

#[test]
fn model_validation_errors() {
    let model = toy_model(&ToyModelConfig::smplx_layout(10)).unwrap();
    let mut bad = model.arrays().clone();
    bad.skinning_weights[(0, 0)] += 0.01;
    assert!(matches!(
        BodyModelDef::new(bad),
        Err(BodyModelError::InvalidWeights {
            what: "skinning weights",
            row: 0,
            ..
        })
    ));

    let mut bad = model.arrays().clone();
    bad.joint_regressor[(3, 6)] = -bad.joint_regressor[(3, 6)];
    assert!(matches!(
        BodyModelDef::new(bad),
        Err(BodyModelError::InvalidWeights { .. })
    ));

    let mut bad = model.arrays().clone();
    let body0 = bad.part_masks["body"][0];
    bad.part_masks.get_mut("face").unwrap().push(body0);
    assert!(matches!(
        BodyModelDef::new(bad),
        Err(BodyModelError::InvalidMask { .. })
    ));

    let mut bad = model.arrays().clone();
    bad.part_masks.get_mut("face").unwrap().push(10_000);
    assert!(matches!(
        BodyModelDef::new(bad),
        Err(BodyModelError::InvalidMask { .. })
    ));

    let mut bad = model.arrays().clone();
    bad.num_expression = 9;
    assert!(matches!(
        BodyModelDef::new(bad),
        Err(BodyModelError::DimensionMismatch { .. })
    ));
}

#[test]
fn json_round_trip_preserves_model() {
    let mut cfg = ToyModelConfig::smplx_layout(11);
    cfg.with_pose_correctives = true;
    let model = toy_model(&cfg).unwrap();
    let text = model_to_json(&model);
    let back = model_from_json(&text, None).unwrap();
    assert_eq!(back.arrays().template, model.arrays().template);
    assert_eq!(back.arrays().shape_basis, model.arrays().shape_basis);
    assert_eq!(
        back.arrays().pose_corrective_basis,
        model.arrays().pose_corrective_basis
    );
    assert_eq!(back.skinning_weights(), model.skinning_weights());
    assert_eq!(back.joint_regressor(), model.joint_regressor());
    assert_eq!(back.part_masks(), model.part_masks());
    assert_eq!(back.part_joint_masks(), model.part_joint_masks());
    assert_eq!(back.tree(), model.tree());
    for row in back.skinning_weights().row_iter() {
        assert!((row.sum() - 1.0).abs() <= WEIGHT_SUM_TOLERANCE);
    }
    assert_eq!(model_to_json(&back), text);
}

#[test]
fn json_units_and_errors() {
    let text = r#"{"version": 1, "units": "m", "vertex_count": 1, "num_shape": 1, "num_expression": 0,
        "parents": [-1], "template": [[0.01, 0.02, 0.03]], "shape_basis": [0.0, 0.0, 0.005],
        "joint_regressor": [1.0], "skinning_weights": [1.0]}"#;
    let m = model_from_json(text, None).unwrap();
    assert!((m.template()[0] - Vector3::new(10.0, 20.0, 30.0)).norm() < 1e-12);
    assert!((m.arrays().shape_basis[(2, 0)] - 5.0).abs() < 1e-12);

    let err = |t: String| model_from_json(&t, None).unwrap_err();
    assert!(matches!(
        err(text.replace("\"m\"", "\"cm\"")),
        BodyModelError::Format(_)
    ));
    assert!(matches!(
        err(text.replace("\"version\": 1", "\"version\": 2")),
        BodyModelError::Format(_)
    ));
    assert!(matches!(
        err(text.replace(
            "[1.0], \"skinning_weights\": [1.0]",
            "[1.0], \"skinning_weights\": [0.5]"
        )),
        BodyModelError::InvalidWeights { .. }
    ));
    assert!(matches!(
        err(text.replace("[-1]", "[-1, 0]")),
        BodyModelError::Format(_)
    ));
    assert!(matches!(
        err(text.replace("[-1]", "[0]")),
        BodyModelError::MalformedTree(_)
    ));
    assert!(matches!(
        err(text.replace("\"template\"", "\"tmpl\"")),
        BodyModelError::Format(_)
    ));
    assert!(matches!(err("[1, 2".to_string()), BodyModelError::Json(_)));
}

#[test]
fn json_arrays_from_sibling_container() {
    use crate::io::{write_npz_file, ArrayRecord, NpzArchive};
    let dir = tempfile::tempdir().unwrap();
    let mut archive = NpzArchive::new();
    archive.insert(
        "template".into(),
        ArrayRecord::from_f64(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap(),
    );
    write_npz_file(&dir.path().join("arrays.npz"), &archive).unwrap();
    let text = r#"{"version": 1, "vertex_count": 1, "num_shape": 0, "num_expression": 0,
        "parents": [-1], "template": "npz:template", "shape_basis": [],
        "joint_regressor": [1.0], "skinning_weights": [1.0], "arrays": "arrays.npz"}"#;
    std::fs::write(dir.path().join("model.json"), text).unwrap();
    let m = load_model(&dir.path().join("model.json")).unwrap();
    assert_eq!(m.template()[0], Vector3::new(1.0, 2.0, 3.0));

    std::fs::write(dir.path().join("bad.json"), text.replace("npz:template", "npz:missing")).unwrap();
    assert!(matches!(
        load_model(&dir.path().join("bad.json")),
        Err(BodyModelError::Format(_))
    ));
    assert!(load_model(&dir.path().join("absent.json")).unwrap_err().is_io());
}

fn compose_global(pose: &FullPose, r: &Matrix3<f64>) -> FullPose {
    let mut out = pose.clone();
    let composed = log_rotation(&(r * rodrigues(pose.joint(0))));
    out.set_joint(0, composed).unwrap();
    out
}

fn rel_error(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let scale = b.iter().map(|p| p.norm()).fold(1.0, f64::max);
    max_dist(a, b) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_rotation_equivariance(seed in 0u64..10_000, rot in prop::array::uniform3(-1.5f64..1.5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = toy_model(&ToyModelConfig::random_tree(8, seed)).unwrap();
        let pose = random_pose(&mut rng, 8, 1.0);
        let beta = random_coeffs(&mut rng, 10);
        let psi = random_coeffs(&mut rng, 10);
        let r = rodrigues(&Vector3::from(rot));
        let base: Vec<_> = model.skin(&pose, &beta, &psi).unwrap().iter().map(|p| r * p).collect();
        let turned = model.skin(&compose_global(&pose, &r), &beta, &psi).unwrap();
        prop_assert!(rel_error(&turned, &base) < 1e-9);
    }

    #[test]
    fn vertices_affine_in_shape(seed in 0u64..10_000, correctives in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = ToyModelConfig::random_tree(6, seed);
        cfg.with_pose_correctives = correctives;
        let model = toy_model(&cfg).unwrap();
        let pose = random_pose(&mut rng, 6, 1.0);
        let (b1, p1) = (random_coeffs(&mut rng, 10), random_coeffs(&mut rng, 10));
        let (b2, p2) = (random_coeffs(&mut rng, 10), random_coeffs(&mut rng, 10));
        let sum = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<_>>();
        let v12 = model.skin(&pose, &sum(&b1, &b2), &sum(&p1, &p2)).unwrap();
        let v1 = model.skin(&pose, &b1, &p1).unwrap();
        let v2 = model.skin(&pose, &b2, &p2).unwrap();
        let v0 = model.skin(&pose, &[0.0; 10], &[0.0; 10]).unwrap();
        for i in 0..v0.len() {
            prop_assert!((v12[i] - v1[i] - v2[i] + v0[i]).norm() < 1e-9);
        }
    }
}
