//! Builds the vector, matrix and image inputs and the heatmap target for one
//! sample, and prints the image channels as ASCII art.

use nlos_loc::dataset::{generate_samples, DatasetConfig};
use nlos_loc::encoders::{encode_image, encode_matrix, encode_target, encode_vector, AblationFlags, GeoTransform};

fn main() -> nlos_loc::Result<()> {
    let samples = generate_samples(&DatasetConfig::default(), 0..1)?;
    let s = samples.iter().find(|s| !s.los()).unwrap_or(&samples[0]);
    let w = s.base_station();
    let flags = AblationFlags::default();
    println!("sample {} bs {} ue {} (LOS: {})", s.record.map_id, s.record.bs_index, s.record.ue_index, s.los());

    println!("vector: {:?}", encode_vector(&s.record.paths, w, flags)?);
    let (k, m) = encode_matrix(&s.record.paths, w, flags)?;
    for row in m.chunks(m.len() / k) {
        println!("matrix row: {row:?}");
    }

    let size = 32;
    let img = encode_image(&s.scene, w, &s.record.paths, size, flags)?;
    let target = encode_target(&GeoTransform::for_scene(&s.scene, size)?, s.true_location, 1.5)?;
    println!("legend: # obstacle, a AoA ray, d AoD ray, * both rays, o target > 0.5");
    for r in 0..size {
        let line: String = (0..size)
            .map(|c| match (img.get(0, r, c), img.get(1, r, c), img.get(2, r, c), target.get(r, c)) {
                (_, _, _, t) if t > 0.5 => 'o',
                (_, a, d, _) if a > 0.0 && d > 0.0 => '*',
                (_, a, _, _) if a > 0.0 => 'a',
                (_, _, d, _) if d > 0.0 => 'd',
                (m, _, _, _) if m > 0.0 => '#',
                _ => '.',
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
