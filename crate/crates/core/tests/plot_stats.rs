use coinlab_core::plot::{render_grid_csv, render_grid_svg, render_scatter};
use coinlab_core::{
    analyze, generate_run, histogram_grid, AdjustmentSet, ArtifactConfig, HistogramWindow, ScatterSpec, SynthConfig,
};

fn ideal_analysis(seed: u64) -> coinlab_core::Analysis {
    let cfg = SynthConfig {
        seed,
        duration_s: 1.0,
        ..SynthConfig::default()
    };
    let (a, b, _) = generate_run(&cfg, &ArtifactConfig::default()).unwrap();
    analyze(&a, &b, &AdjustmentSet::default(), 4_000)
}

#[test]
fn vast_majority_within_one_nanosecond() {
    let an = ideal_analysis(1);
    let recs: Vec<_> = an.matched.from_alice.records.iter().filter(|r| !r.multiple && r.delta_ps.abs() <= 4_000).collect();
    let inside = recs.iter().filter(|r| r.delta_ps.abs() <= 1_000).count();
    let share = inside as f64 / recs.len() as f64;
    assert!(share >= 0.95, "{share}");
}

#[test]
fn grid_conserves_records_inside_the_window() {
    let an = ideal_analysis(2);
    let window = HistogramWindow::default();
    let grid = histogram_grid(&an.matched.from_alice, &an.pairs, window);
    let expect = an
        .matched
        .from_alice
        .records
        .iter()
        .filter(|r| !r.multiple && window.bin_of(r.delta_ps).is_some())
        .count() as u64;
    assert_eq!(grid.total(), expect);
    assert_eq!(grid.counts[0][0].len(), 50);
    let csv = render_grid_csv(&grid);
    assert_eq!(csv.lines().count(), 51);
    let csv_total: u64 = csv
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).collect::<Vec<_>>())
        .sum();
    assert_eq!(csv_total, grid.total());
    let report = grid.chsh.as_ref().expect("all classes filled");
    assert!(report.s > 2.5);
    assert!(render_grid_svg(&grid).contains("</svg>"));
}

#[test]
fn broadened_run_shows_a_wide_stripe() {
    let cfg = SynthConfig {
        seed: 3,
        duration_s: 1.0,
        ..SynthConfig::default()
    };
    let art = ArtifactConfig {
        broad_fraction: 0.15,
        ..ArtifactConfig::default()
    };
    let (a, b, _) = generate_run(&cfg, &art).unwrap();
    let an = analyze(&a, &b, &AdjustmentSet::default(), 20_000);
    let recs = &an.matched.from_alice.records;
    let band = |lo: i64, hi: i64| recs.iter().filter(|r| !r.multiple && (lo..hi).contains(&r.delta_ps.abs())).count() as f64;
    // Per-ps density in the stripe far exceeds the density beyond it.
    let stripe = band(2_000, 20_000) / 18_000.0;
    let beyond = band(50_000, 200_000) / 150_000.0;
    assert!(stripe > 20.0 * beyond.max(1e-9), "stripe {stripe} beyond {beyond}");
    let core = band(0, 1_000) / 1_000.0;
    assert!(core > 10.0 * stripe);
}

#[test]
fn scatter_is_deterministic_and_bounded() {
    let an = ideal_analysis(4);
    let spec = ScatterSpec::default();
    let one = render_scatter(&an.matched.from_alice, &spec);
    let two = render_scatter(&an.matched.from_alice, &spec);
    assert_eq!(one, two);
    assert!(one.starts_with("<?xml") || one.starts_with("<svg"));
}
