use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tkpsvd::io::{
    load_decomposition, load_image, read_sigmas_text, read_tensor, save_decomposition, save_image,
    write_sparse_pattern, write_tensor,
};
use tkpsvd::structure::{map_for_kind, StructureKind};
use tkpsvd::tkpsvd::{tkpsvd, DEFAULT_TOL};
use tkpsvd::{Backend, DenseTensor, Error, FactorGrid};

#[test]
fn tensor_files_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = DenseTensor::random_normal(&[3, 1, 4, 2], &mut rng).unwrap();
    for name in ["a.bin", "a.ten"] {
        let path = dir.path().join(name);
        write_tensor(&t, &path).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.dims(), t.dims());
        let bits = |x: &DenseTensor| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&t), "{name}");
    }
    let text = fs::read_to_string(dir.path().join("a.ten")).unwrap();
    assert!(text.starts_with("TEN1\n4\n3 1 4 2\n"));
}

#[test]
fn truncated_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    write_tensor(&DenseTensor::zeros(&[2, 2]).unwrap(), &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_tensor(&path).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    fs::write(&path, longer).unwrap();
    assert!(matches!(read_tensor(&path), Err(Error::Format(_))));
}

#[test]
fn decomposition_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = FactorGrid::parse("2x3,2x2,3x1").unwrap();
    let a = DenseTensor::random_normal(&grid.target_dims(), &mut rng).unwrap();
    for backend in [Backend::Ttr1, Backend::Hosvd] {
        let res = tkpsvd(&a, &grid, backend, DEFAULT_TOL).unwrap();
        let path = dir.path().join("d.tkp");
        save_decomposition(&res, &path).unwrap();
        let back = load_decomposition(&path).unwrap();
        assert_eq!(back.grid, res.grid);
        assert_eq!(back.backend, backend);
        assert_eq!(back.sigmas, res.sigmas);
        assert_eq!(back.source_norm, res.source_norm);
        assert_eq!(back.multiplets, res.multiplets);
        assert_eq!(back.reconstruct(back.term_count()).unwrap().data(), res.reconstruct(res.term_count()).unwrap().data());
    }
}

#[test]
fn sigma_list_with_comments() {
    let text = "# weights\n3.5\n  2.0 # trailing\n\n1e-3\n";
    assert_eq!(read_sigmas_text(text.as_bytes()).unwrap(), vec![3.5, 2.0, 1e-3]);
    assert!(read_sigmas_text("1.0\nabc\n".as_bytes()).is_err());
}

#[test]
fn sparse_pattern_lists_each_row_once() {
    let p = map_for_kind(&StructureKind::Persymmetric, &[2, 2]).unwrap();
    let mut out = Vec::new();
    write_sparse_pattern(&p, &mut out).unwrap();
    let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
    assert_eq!(lines.len(), 4);
    for (row, line) in lines.iter().enumerate() {
        let mut it = line.split(' ');
        assert_eq!(it.next().unwrap(), (row + 1).to_string());
        assert_eq!(it.next().unwrap().parse::<usize>().unwrap(), p.source(row) + 1);
    }
}

#[test]
fn image_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = DenseTensor::from_fn(&[4, 6, 3], |ix| ((ix[0] * 40 + ix[1] * 7 + ix[2] * 90) % 256) as f64).unwrap();
    let path = dir.path().join("x.ppm");
    save_image(&img, &path).unwrap();
    assert_eq!(load_image(&path).unwrap().data(), img.data());
    let gray = DenseTensor::from_fn(&[3, 5, 1], |ix| (ix[0] + 10 * ix[1]) as f64).unwrap();
    let path = dir.path().join("g.pgm");
    save_image(&gray, &path).unwrap();
    assert_eq!(load_image(&path).unwrap().data(), gray.data());
}
