use a3c_core::ckpt::{self, transfer_init, Checkpoint, CkptError, Metadata, RngState};
use a3c_core::env::{Minigame, ObservationSpec};
use a3c_core::net::{build, ArchitectureSpec, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{bits, random_checkpoint};

#[test]
fn hundred_random_roundtrips_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let c = random_checkpoint(&mut rng);
        let path = dir.path().join(format!("{i}.ckpt"));
        ckpt::save(&c, &path).unwrap();
        let back = ckpt::load(&path).unwrap();
        assert_eq!(bits(&back), bits(&c));
        assert_eq!(back.metadata, c.metadata);
        assert_eq!(back.optimizer, c.optimizer);
        ckpt::save(&back, &dir.path().join("again.ckpt")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("again.ckpt")).unwrap()
        );
    }
}

#[test]
fn malformed_files_map_to_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bytes = random_checkpoint(&mut rng).encode();
    let write = |name: &str, b: &[u8]| {
        let p = dir.path().join(name);
        std::fs::write(&p, b).unwrap();
        p
    };
    let truncated = write("t.ckpt", &bytes[..bytes.len() - 7]);
    assert!(matches!(ckpt::load(&truncated), Err(CkptError::Truncated { .. })));
    let mut b = bytes.clone();
    b[..4].copy_from_slice(b"NOPE");
    assert!(matches!(ckpt::load(&write("m.ckpt", &b)), Err(CkptError::BadMagic(_))));
    let mut b = bytes.clone();
    b[4..8].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(
        ckpt::load(&write("v.ckpt", &b)),
        Err(CkptError::VersionMismatch { found: 7, .. })
    ));
    let mut b = bytes.clone();
    b.extend_from_slice(&[0, 0]);
    assert!(matches!(
        ckpt::load(&write("x.ckpt", &b)),
        Err(CkptError::ShapeInconsistency(_))
    ));
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let at = text.find("resolution=").unwrap() + "resolution=".len();
    let mut b = bytes.clone();
    b[at] = b'x';
    assert!(matches!(
        ckpt::load(&write("meta.ckpt", &b)),
        Err(CkptError::BadMetadata(_))
    ));
    assert!(matches!(
        ckpt::load(&dir.path().join("missing.ckpt")),
        Err(CkptError::Io(_))
    ));
}

#[test]
fn declared_architecture_must_match_the_tensor_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut c = random_checkpoint(&mut rng);
    c.metadata.obs_spec = ObservationSpec::new(c.metadata.obs_spec.resolution + 1).unwrap();
    // the spatial layer does not depend on resolution, but the table is
    // still checked name by name and shape by shape
    let other = ArchitectureSpec::new(
        if c.metadata.variant == Variant::PlusConv {
            Variant::Baseline
        } else {
            Variant::PlusConv
        },
        c.metadata.obs_spec,
    );
    c.metadata.variant = other.variant;
    assert!(matches!(
        Checkpoint::decode(&c.encode()),
        Err(CkptError::ShapeInconsistency(_))
    ));
}

#[test]
fn transfer_is_identity_for_matching_architectures() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = random_checkpoint(&mut rng);
    let arch = c.metadata.arch();
    let init = transfer_init(&c, "a.ckpt", Minigame::Shards, &arch).unwrap();
    assert_eq!(
        init.params.iter().map(|p| p.tensor.data().to_vec()).collect::<Vec<_>>(),
        c.params.iter().map(|p| p.tensor.data().to_vec()).collect::<Vec<_>>()
    );
    assert!(init.params.iter().all(|p| p.tensor.grad().iter().all(|&g| g == 0.0)));
    assert_eq!(init.source, "a.ckpt");
}

#[test]
fn transfer_across_architectures_names_the_tensor() {
    let arch = ArchitectureSpec::new(Variant::Baseline, ObservationSpec::new(8).unwrap());
    let src = Checkpoint {
        metadata: Metadata {
            variant: Variant::Baseline,
            obs_spec: arch.obs_spec,
            minigame: Minigame::Beacon,
            global_step: 5,
            episodes: 1,
            mean_score: 0.0,
            rng: RngState::default(),
            source: None,
        },
        params: build::<f32>(&arch, 0),
        optimizer: None,
    };
    let target = ArchitectureSpec::new(Variant::PlusConv, arch.obs_spec);
    let err = transfer_init(&src, "a", Minigame::Shards, &target).unwrap_err();
    match &err {
        CkptError::Incompatible { tensor, .. } => assert_eq!(tensor, "screen.conv1.weight"),
        e => panic!("unexpected {e}"),
    }
    assert!(err.to_string().contains("screen.conv1.weight"));
    let plusfc = ArchitectureSpec::new(Variant::PlusFc, arch.obs_spec);
    let err = transfer_init(&src, "a", Minigame::Shards, &plusfc).unwrap_err();
    assert!(
        matches!(err, CkptError::Incompatible { ref tensor, .. } if tensor == "value.fc.weight"),
        "{err}"
    );
}
