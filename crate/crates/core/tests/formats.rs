use rosette::recon::{build_reconstruction_matrix, ReconstructionMatrix, ReconstructionMethod};
use rosette::scan::{discretize_pattern, rosette_locus, RosettePattern};
use rosette::sense::{build_measurement_matrix, rasterize_probe, MeasurementMatrix};
use rosette::ImageGrid;

fn small_matrix() -> MeasurementMatrix {
    let pattern = RosettePattern::new(3, 7, 0.04, 20_000.0).unwrap();
    let samples = discretize_pattern(&rosette_locus(&pattern), 12).unwrap();
    build_measurement_matrix(&samples, &rasterize_probe(1.5).unwrap()).unwrap()
}

#[test]
fn pgm_round_trips_at_both_depths() {
    for (depth, top) in [(8u8, 255u16), (16, 65535)] {
        let pixels: Vec<u16> = (0..35).map(|i| (i * 1877 % (top as usize + 1)) as u16).collect();
        let img = ImageGrid::new(7, 5, depth, pixels).unwrap();
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(format!("P5\n7 5\n{top}\n").as_bytes()));
        assert_eq!(ImageGrid::read_pgm(&buf[..]).unwrap(), img);
    }
}

#[test]
fn pgm_sixteen_bit_is_big_endian() {
    let img = ImageGrid::new(1, 1, 16, vec![0x1234]).unwrap();
    let mut buf = Vec::new();
    img.write_pgm(&mut buf).unwrap();
    assert_eq!(&buf[buf.len() - 2..], &[0x12, 0x34]);
}

#[test]
fn saved_pgm_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pgm");
    let img = ImageGrid::new(4, 4, 8, (0..16).map(|v| v * 16).collect()).unwrap();
    img.save_pgm(&path).unwrap();
    assert_eq!(ImageGrid::load_pgm(&path).unwrap(), img);
}

#[test]
fn measurement_matrix_round_trips() {
    let m = small_matrix();
    let mut buf = Vec::new();
    m.write_to(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"RCSM");
    assert_eq!(buf.len(), 20 + 16 * m.nnz());
    let back = MeasurementMatrix::read_from(&buf[..]).unwrap();
    assert_eq!(back.entries(), m.entries());
    assert_eq!(back.content_hash(), m.content_hash());
    assert!(MeasurementMatrix::read_from(&buf[..buf.len() - 3]).is_err());
}

#[test]
fn reconstruction_matrix_round_trips() {
    let p = build_reconstruction_matrix(&small_matrix(), ReconstructionMethod::FrequencyWeighted, 1e-10).unwrap();
    let mut buf = Vec::new();
    p.write_to(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"RCSP");
    let back = ReconstructionMatrix::read_from(&buf[..]).unwrap();
    assert_eq!(back.method(), p.method());
    assert_eq!(back.tolerance(), p.tolerance());
    assert_eq!(back.data(), p.data());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(ReconstructionMatrix::read_from(&bad[..]).is_err());
}
