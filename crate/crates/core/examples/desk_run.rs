//! Trains on 8192 patches from the bundled images and prints the RMSE
//! trace. Run from the workspace root:
//!
//! cargo run --release -p orthodict --example desk_run -- 16

use std::time::Instant;

use orthodict::data::{extract_patches_from_images, load_image, PatchConfig};
use orthodict::sbo::{represent, sbo_train, SboConfig};

fn main() -> orthodict::Result<()> {
    let k_max = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let images = ["camera.pgm", "astronaut.ppm", "coins.pgm", "chelsea.ppm"]
        .iter()
        .map(|n| load_image(format!("data/images/{n}")))
        .collect::<orthodict::Result<Vec<_>>>()?;
    let y = extract_patches_from_images(
        &images,
        &PatchConfig {
            count: 8192,
            seed: 1,
            ..Default::default()
        },
    )?;
    let cfg = SboConfig {
        k_max,
        seed: 1,
        ..Default::default()
    };
    let out = sbo_train(y.view(), &cfg)?;
    for r in &out.report.iterations {
        println!(
            "iter {:>2}  K {:>2}  rmse {:.5}  {:.2}s",
            r.iteration, r.size, r.rmse, r.elapsed_learn
        );
    }
    let t = Instant::now();
    represent(y.view(), &out.dictionary, cfg.s0, cfg.energy, cfg.chunk_size);
    println!(
        "t_learn {:.2}s (init {:.2}s), t_rep {:.3}s",
        out.report.t_learn,
        out.report.t_init,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
