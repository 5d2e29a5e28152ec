//! Traces every radio path between one base station and one user in a small
//! street scene, then recovers the user from the direct path alone.

use nlos_loc::geometry::{los_visible, trace_paths, Point, Rect, Scene, SPEED_OF_LIGHT};

fn main() -> nlos_loc::Result<()> {
    let mut scene = Scene::empty(60.0, 40.0);
    scene.obstacles = vec![Rect::new(25.0, 0.0, 10.0, 10.0), Rect::new(52.0, 0.0, 6.0, 12.0)];
    let bs = Point::new(5.0, 20.0);
    scene.base_stations.push(bs);

    for (name, ue) in [("visible", Point::new(50.0, 22.0)), ("shadowed", Point::new(45.0, 3.0))] {
        println!("{name} user at ({}, {})", ue.x, ue.y);
        println!("  direct segment clear: {}", los_visible(&scene, bs, ue)?);
        let Some(link) = trace_paths(&scene, bs, ue, 2)? else {
            println!("  no propagation path");
            continue;
        };
        for p in &link.paths {
            println!(
                "  {} bounce(s): length {:7.3} m, delay {:.3e} s, AoA {:+.4} rad, AoD {:+.4} rad",
                p.bounces,
                p.tau * SPEED_OF_LIGHT,
                p.tau,
                p.aoa,
                p.aod
            );
        }
        if link.los {
            // the direct path points from the base station to the user
            let p = &link.paths[0];
            let d = p.tau * SPEED_OF_LIGHT;
            let est = Point::new(bs.x + d * p.aoa.cos(), bs.y + d * p.aoa.sin());
            println!("  recovered from the direct path: ({:.6}, {:.6})", est.x, est.y);
        }
    }
    Ok(())
}
