use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pocketflow::chem::xyz::{read_xyz, write_xyz};
use pocketflow::chem::{perceive_bonds, Atom, BondRules, Molecule, Pocket, Vocabulary};
use pocketflow::encoder::{Context, EncoderConfig};
use pocketflow::evaluator::{
    count_contacts, dg_to_kd, pkd, AffinityModel, ContactCounts, ROOM_TEMPERATURE,
};
use pocketflow::flow::{sample_base, FlowStack};
use pocketflow::generator::{GenConfig, GenerationState, Generator, StepOutcome};
use pocketflow::geometry::{rmsd_aligned, rmsd_coords, RbfBank, RigidTransform, Vec3};
use pocketflow::model::{Model, ModelConfig};
use pocketflow::params::{Checkpoint, ParamSet};
use pocketflow::pdb::{
    normalize_bfactors, parse_pdb, serialize_pdb, split_pocket_ligand, RecordKind, StructureRecord,
};
use pocketflow::trainer::{build_steps, nll_loss, toy_dataset};
use pocketflow::RunConfig;

fn vocab() -> Vocabulary {
    Vocabulary::default()
}

fn atom_strategy(span: f64) -> impl Strategy<Value = Atom> {
    (0usize..10, -span..span, -span..span, -span..span)
        .prop_map(|(e, x, y, z)| Atom::new(e, [x, y, z]))
}

/// Round to the three decimals a PDB coordinate column holds.
fn r3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn r2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn record_strategy() -> impl Strategy<Value = StructureRecord> {
    let names = prop::sample::select(vec![
        ("N", "N"),
        ("CA", "C"),
        ("OD1", "O"),
        ("SG", "S"),
        ("HB2", "H"),
        ("HG21", "H"),
        ("CL", "CL"),
        ("BR1", "BR"),
    ]);
    (
        any::<bool>(),
        1i64..99999,
        names,
        prop::sample::select(vec!["ALA", "LYS", "LIG", "HEM"]),
        prop::sample::select(vec!['A', 'B', 'Z']),
        -999i64..9999,
        prop::array::uniform3(-999.0..999.0f64),
        0.0..1.0f64,
        0.0..200.0f64,
    )
        .prop_map(
            |(het, serial, (name, el), res, chain, seq, pos, occ, b)| StructureRecord {
                kind: if het {
                    RecordKind::Hetatm
                } else {
                    RecordKind::Atom
                },
                serial,
                atom_name: name.into(),
                residue_name: res.into(),
                chain,
                residue_seq: seq,
                position: pos.map(r3),
                occupancy: r2(occ),
                bfactor: r2(b),
                element: el.into(),
            },
        )
}

fn small_model(gating: bool, seed: u64) -> (Model, ParamSet) {
    let cfg = ModelConfig {
        encoder: EncoderConfig {
            width: 6,
            hidden: 8,
            layers: 2,
            rbf: RbfBank::evenly_spaced(8, 0.0, 6.0, None).unwrap(),
            cutoff: 6.0,
            bfactor_gating: gating,
        },
        type_flow_layers: 2,
        coord_flow_layers: 3,
        init_scale: 0.3,
    };
    Model::initialized(cfg, vocab(), seed).unwrap()
}

/// Toy-set loss before and after moving pocket and ligand together.
fn loss_before_after(model: &Model, values: &[f64], t: &RigidTransform) -> (f64, f64) {
    let data = toy_dataset(&vocab(), 2, 0.1, 1).unwrap();
    let moved: Vec<_> = data
        .iter()
        .map(|e| {
            let mut e = e.clone();
            for a in e.pocket.atoms.iter_mut().chain(e.ligand.atoms.iter_mut()) {
                a.position = t.apply_point(&a.position);
            }
            e
        })
        .collect();
    let a = nll_loss(model, values, &build_steps(model, &data, 0.25, 0).unwrap()).unwrap();
    let b = nll_loss(model, values, &build_steps(model, &moved, 0.25, 0).unwrap()).unwrap();
    (a, b)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Kolmogorov-Smirnov statistic of `xs` against `cdf`.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bonds_follow_atoms_under_permutation(
        atoms in prop::collection::vec(atom_strategy(3.0), 1..8),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let v = vocab();
        let rules = BondRules::default();
        let mut perm: Vec<usize> = (0..atoms.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<Atom> = perm.iter().map(|&i| atoms[i]).collect();
        let a = perceive_bonds(&atoms, &v, &rules).unwrap();
        let b = perceive_bonds(&shuffled, &v, &rules).unwrap();
        let mut mapped: Vec<(usize, usize)> = b
            .bonds
            .iter()
            .map(|bd| {
                let (x, y) = (perm[bd.i], perm[bd.j]);
                (x.min(y), x.max(y))
            })
            .collect();
        mapped.sort();
        let mut orig: Vec<(usize, usize)> = a.bonds.iter().map(|bd| (bd.i, bd.j)).collect();
        orig.sort();
        prop_assert_eq!(mapped, orig);
        prop_assert_eq!(a.clashes.len(), b.clashes.len());
    }

    #[test]
    fn rmsd_symmetric_and_alignment_never_worse(
        pairs in prop::collection::vec((prop::array::uniform3(-5.0..5.0f64), prop::array::uniform3(-5.0..5.0f64)), 3..10),
    ) {
        let a: Vec<Vec3> = pairs.iter().map(|(p, _)| Vec3::from(*p)).collect();
        let b: Vec<Vec3> = pairs.iter().map(|(_, q)| Vec3::from(*q)).collect();
        let ab = rmsd_coords(&a, &b).unwrap();
        prop_assert_eq!(ab, rmsd_coords(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        let ma = Molecule { atoms: a.iter().map(|p| Atom { element: 1, position: *p }).collect(), bonds: vec![] };
        let mb = Molecule { atoms: b.iter().map(|p| Atom { element: 1, position: *p }).collect(), bonds: vec![] };
        prop_assert!(rmsd_aligned(&ma, &mb).unwrap() <= ab + 1e-9);
    }

    #[test]
    fn alignment_undoes_rigid_motion(
        pts in prop::collection::vec(prop::array::uniform3(-5.0..5.0f64), 3..12),
        seed in any::<u64>(),
    ) {
        let t = RigidTransform::random(&mut ChaCha8Rng::seed_from_u64(seed), 10.0);
        let a: Vec<Atom> = pts.iter().map(|p| Atom::new(1, *p)).collect();
        let b: Vec<Atom> = a.iter().map(|x| Atom { element: 1, position: t.apply_point(&x.position) }).collect();
        let ma = Molecule { atoms: a, bonds: vec![] };
        let mb = Molecule { atoms: b, bonds: vec![] };
        prop_assert!(rmsd_aligned(&ma, &mb).unwrap() < 1e-6);
    }

    #[test]
    fn pdb_serialize_then_parse_is_identity(records in prop::collection::vec(record_strategy(), 1..20)) {
        let text = serialize_pdb(&records).unwrap();
        let back = parse_pdb(&text).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(serialize_pdb(&back).unwrap(), text);
    }

    #[test]
    fn split_ignores_record_order(
        pocket in prop::collection::vec(atom_strategy(8.0), 1..15),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let v = vocab();
        let mut records: Vec<StructureRecord> = pocket
            .iter()
            .enumerate()
            .map(|(i, a)| StructureRecord {
                kind: RecordKind::Atom,
                serial: i as i64 + 1,
                atom_name: "X".into(),
                residue_name: "ALA".into(),
                chain: 'A',
                residue_seq: i as i64,
                position: [a.position.x, a.position.y, a.position.z],
                occupancy: 1.0,
                bfactor: 10.0 + i as f64,
                element: v.get(a.element).unwrap().symbol.clone(),
            })
            .collect();
        records.push(StructureRecord {
            kind: RecordKind::Hetatm,
            serial: 999,
            atom_name: "C1".into(),
            residue_name: "LIG".into(),
            chain: 'L',
            residue_seq: 1,
            position: [0.0, 0.0, 0.0],
            occupancy: 1.0,
            bfactor: 0.0,
            element: "C".into(),
        });
        let key = |p: &Pocket| {
            let mut k: Vec<(u64, u64, u64, u64)> = p
                .atoms
                .iter()
                .zip(&p.bfactors)
                .map(|(a, b)| (a.position.x.to_bits(), a.position.y.to_bits(), a.position.z.to_bits(), b.to_bits()))
                .collect();
            k.sort();
            k
        };
        let first = split_pocket_ligand("x", &records, "LIG", 10.0, &v);
        records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let second = split_pocket_ligand("x", &records, "LIG", 10.0, &v);
        match (first, second) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(key(&a.pocket), key(&b.pocket));
                prop_assert_eq!(a.ligand, b.ligand);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed success"),
        }
    }

    #[test]
    fn bfactor_weights_in_unit_interval(bs in prop::collection::vec(0.0..300.0f64, 1..30)) {
        let atoms = vec![Atom::new(1, [0.0; 3]); bs.len()];
        let w = normalize_bfactors(&Pocket::new(atoms, bs).unwrap()).unwrap();
        prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn kd_monotone_in_dg(a in -100.0..100.0f64, b in -100.0..100.0f64) {
        prop_assume!(a < b);
        let (ka, kb) = (dg_to_kd(a, ROOM_TEMPERATURE).unwrap(), dg_to_kd(b, ROOM_TEMPERATURE).unwrap());
        prop_assert!(ka < kb);
        prop_assert!(pkd(ka) > pkd(kb));
    }

    #[test]
    fn more_contacts_never_weaker(
        c in (0usize..50, 0usize..50, 0usize..50),
        extra in (0usize..10, 0usize..10, 0usize..10),
    ) {
        let m = AffinityModel::default();
        let base = ContactCounts { polar_polar: c.0, polar_apolar: c.1, apolar_apolar: c.2 };
        let more = ContactCounts { polar_polar: c.0 + extra.0, polar_apolar: c.1 + extra.1, apolar_apolar: c.2 + extra.2 };
        prop_assert!(m.predict_dg(&more) <= m.predict_dg(&base));
        prop_assert_eq!(base.total(), c.0 + c.1 + c.2);
    }

    #[test]
    fn contacts_symmetric_in_roles(
        a in prop::collection::vec(atom_strategy(4.0), 1..8),
        b in prop::collection::vec(atom_strategy(4.0), 1..8),
    ) {
        let v = vocab();
        let ab = count_contacts(&Molecule { atoms: a.clone(), bonds: vec![] }, &Pocket::from_atoms(b.clone()), &v, 5.5).unwrap();
        let ba = count_contacts(&Molecule { atoms: b, bonds: vec![] }, &Pocket::from_atoms(a), &v, 5.5).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn xyz_round_trip(atoms in prop::collection::vec(atom_strategy(50.0), 0..10)) {
        let v = vocab();
        let text = write_xyz(&atoms, &v, "t").unwrap();
        let (back, comment) = read_xyz(&text, &v).unwrap();
        prop_assert_eq!(comment, "t");
        prop_assert_eq!(back.len(), atoms.len());
        for (x, y) in back.iter().zip(&atoms) {
            prop_assert_eq!(x.element, y.element);
            prop_assert!((x.position - y.position).amax() <= 5e-7);
        }
    }

    #[test]
    fn flow_logdet_matches_finite_differences(seed in any::<u64>(), dim in 1usize..5, layers in 1usize..5) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let f = FlowStack::register(&mut p, "f", dim, 2, layers).unwrap();
        for v in p.values_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        let c = [0.3, -0.8];
        let z = sample_base(dim, &mut rng);
        let (_, logdet) = f.forward(p.values(), &z, &c).unwrap();
        // elementwise maps: the Jacobian is a permuted diagonal
        let h = 1e-5;
        let mut fd = 0.0;
        for j in 0..dim {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let (xp, _) = f.forward(p.values(), &zp, &c).unwrap();
            let (xm, _) = f.forward(p.values(), &zm, &c).unwrap();
            let col: f64 = xp.iter().zip(&xm).map(|(a, b)| (a - b).abs() / (2.0 * h)).sum();
            fd += col.ln();
        }
        prop_assert!((fd - logdet).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encoder_permutation_equivariant(
        atoms in prop::collection::vec(atom_strategy(4.0), 2..12),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let (model, params) = small_model(true, 3);
        let n = atoms.len();
        let bw: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let ctx = Context::new(&Pocket::from_atoms(atoms), &bw, &[]).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = Context { atoms: perm.iter().map(|&i| ctx.atoms[i]).collect() };
        let enc = model.encoder();
        let a = enc.forward(params.values(), &enc.prepare(&ctx).unwrap());
        let b = enc.forward(params.values(), &enc.prepare(&permuted).unwrap());
        for (k, &i) in perm.iter().enumerate() {
            for (x, y) in b.row(k).iter().zip(a.row(i)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_invariant_under_joint_translation(seed in any::<u64>()) {
        let (model, params) = small_model(true, 7);
        let t = RigidTransform::translation(Vec3::from_fn(|i, _| (seed >> (i * 8) & 0xff) as f64 / 10.0 - 12.0));
        let (a, b) = loss_before_after(&model, params.values(), &t);
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn loss_rigid_invariant_with_isotropic_coordinate_flow(seed in any::<u64>()) {
        let (model, mut params) = small_model(true, 7);
        model.coord_flow().set_identity(params.values_mut());
        let t = RigidTransform::random(&mut ChaCha8Rng::seed_from_u64(seed), 15.0);
        let (a, b) = loss_before_after(&model, params.values(), &t);
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn generation_grows_context_one_atom_at_a_time(seed in any::<u64>()) {
        let v = vocab();
        let (model, params) = small_model(false, seed % 5);
        let cfg = GenConfig::default();
        let g = Generator::new(&model, params.values(), &cfg);
        let (pocket, _) = pocketflow::trainer::toy_complex(&v).unwrap();
        let mut state = GenerationState::new(pocket).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let before = state.placed.atoms.clone();
            let outcome = g.step(&mut state, &mut rng).unwrap();
            match outcome {
                StepOutcome::Placed => {
                    prop_assert_eq!(state.placed.len(), before.len() + 1);
                    prop_assert_eq!(&state.placed.atoms[..before.len()], &before[..]);
                    let fresh = Molecule::from_atoms(state.placed.atoms.clone(), &v, &cfg.bond_rules).unwrap();
                    prop_assert_eq!(&fresh.bonds, &state.placed.bonds);
                }
                StepOutcome::Finished => {
                    prop_assert_eq!(&state.placed.atoms, &before);
                    break;
                }
            }
        }
        prop_assert!(state.placed.len() <= cfg.max_atoms);
    }

    #[test]
    fn checkpoint_text_round_trip(seed in any::<u64>()) {
        let (model, params) = small_model(seed % 2 == 0, seed);
        let text = model.to_checkpoint(&params).to_text();
        let (m2, p2) = Model::from_checkpoint(&Checkpoint::from_text(&text).unwrap()).unwrap();
        prop_assert_eq!(&m2, &model);
        prop_assert_eq!(p2.values(), params.values());
    }

    #[test]
    fn run_config_round_trip(
        seed in any::<u64>(),
        width in 1usize..64,
        lr in 0.0..1.0f64,
        cutoff in 1.0..20.0f64,
        gating in any::<bool>(),
        w in -1.0..0.0f64,
    ) {
        let mut cfg = RunConfig { seed, ..RunConfig::default() };
        cfg.encoder.width = width;
        cfg.encoder.bfactor_gating = gating;
        cfg.trainer.learning_rate = lr;
        cfg.pdb.pocket_cutoff = cutoff;
        cfg.evaluator.polar_polar = w;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn base_samples_pass_ks() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let xs = sample_base(10_000, &mut rng);
    let d = ks_statistic(xs, normal_cdf);
    assert!(d < 0.02, "KS statistic {d}");
}

#[test]
fn flow_samples_follow_composed_affine_law() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ParamSet::new();
    let f = FlowStack::register(&mut p, "f", 1, 2, 4).unwrap();
    for v in p.values_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let c = [0.4, 1.1];
    // compose the per-layer maps by hand: x = S z + B
    let (mut s, mut b) = (1.0, 0.0);
    for (sc, sh) in f.scales_and_shifts(p.values(), &c) {
        s *= sc[0];
        b = sc[0] * b + sh[0];
    }
    let xs: Vec<f64> = (0..10_000)
        .map(|_| f.sample(p.values(), &c, &mut rng).unwrap().0[0])
        .collect();
    let d = ks_statistic(xs, |x| normal_cdf((x - b) / s));
    assert!(d < 0.02, "KS statistic {d}");
}

#[test]
fn untrained_model_generations_are_clash_free() {
    let v = vocab();
    let (pocket, _) = pocketflow::trainer::toy_complex(&v).unwrap();
    let cfg = GenConfig::default();
    let rules = cfg.bond_rules;
    for seed in 0..20u64 {
        let (model, params) = small_model(false, seed);
        let g = Generator::new(&model, params.values(), &cfg);
        let mol = g
            .generate_ligand(&pocket, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap();
        let all: Vec<&Atom> = mol.atoms.iter().chain(&pocket.atoms).collect();
        for (i, a) in mol.atoms.iter().enumerate() {
            for b in all.iter().skip(i + 1) {
                let sum = v.radius(a.element).unwrap() + v.radius(b.element).unwrap();
                assert!(!rules.is_clash((a.position - b.position).norm(), sum));
            }
        }
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let v = vocab();
    let (model, params) = small_model(true, 1);
    let cfg = GenConfig::default();
    let g = Generator::new(&model, params.values(), &cfg);
    let (pocket, _) = pocketflow::trainer::toy_complex(&v).unwrap();
    let a = g
        .generate_ligand(&pocket, &mut ChaCha8Rng::seed_from_u64(4))
        .unwrap();
    let b = g
        .generate_ligand(&pocket, &mut ChaCha8Rng::seed_from_u64(4))
        .unwrap();
    assert_eq!(a, b);
}
