//! Shared fixtures for the solver benchmarks.

use suppose::forward::BackgroundMode;
use suppose::ga::{build_initial_family, GaConfig, Individual};
use suppose::irf::IrfCache;
use suppose::objective::ObjectiveContext;
use suppose::synth::{make_two_line_scene, RenderedScene, Scenario};

pub struct BenchScene {
    pub scenario: Scenario,
    pub rendered: RenderedScene,
    pub cache: IrfCache,
}

/// The two-line image at its acceptance size.
pub fn two_line_fixture() -> BenchScene {
    let scenario = make_two_line_scene(25, 1);
    let rendered = scenario.render().expect("renderable scene");
    let cache = IrfCache::new(&scenario.irf, &scenario.grid).expect("valid cache");
    BenchScene {
        scenario,
        rendered,
        cache,
    }
}

/// A ready-to-step population for the solver benchmarks.
pub fn seeded_population<'a>(
    scene: &'a BenchScene,
    n_sources: usize,
    cfg: &GaConfig,
) -> (ObjectiveContext<'a>, Vec<Individual>) {
    let ctx = ObjectiveContext::new(
        &scene.rendered.signal,
        &scene.cache,
        BackgroundMode::UnknownConstant,
    )
    .expect("grids match");
    let z: f64 = scene.rendered.truth.intensities.iter().sum();
    let alpha = z / n_sources as f64;
    let pop = build_initial_family(&ctx, n_sources, alpha, cfg.population, cfg.init_spread, cfg.seed);
    (ctx, pop)
}
