use dynbc::grid_ops::{bulk_laplacian, div_flux, surface_laplacian};
use dynbc::mobility::antisymmetric_dissipation_check;
use dynbc::{
    assemble_surface_mobility, initial_condition, BulkField, Edge, Grid, Integrator, MemorySink, ModelKind,
    PhysicalParams, SchemeConfig, SurfaceField,
};
use proptest::prelude::*;

fn edge() -> impl Strategy<Value = Edge> {
    prop_oneof![Just(Edge::Bottom), Just(Edge::Top), Just(Edge::Left), Just(Edge::Right)]
}

fn grid_and_fields() -> impl Strategy<Value = (Grid, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (4usize..9, 4usize..9, edge()).prop_flat_map(|(nx, ny, e)| {
        let g = Grid::new(nx, ny, [0.0, nx as f64 * 0.25, 0.0, ny as f64 * 0.25], e).unwrap();
        let (nc, ng) = (g.n_cells(), g.n_gamma());
        (
            Just(g),
            prop::collection::vec(-1.0f64..1.0, nc),
            prop::collection::vec(-1.0f64..1.0, nc),
            prop::collection::vec(-1.0f64..1.0, ng),
            prop::collection::vec(-1.0f64..1.0, ng),
        )
    })
}

/// Sum over interior faces of `(u_a − u_b)(v_a − v_b)`, by brute force.
fn face_form(g: &Grid, u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for iy in 0..g.ny() {
        for ix in 0..g.nx() {
            let a = g.cell_index(ix, iy);
            if ix + 1 < g.nx() {
                let b = g.cell_index(ix + 1, iy);
                s += (u[a] - u[b]) * (v[a] - v[b]);
            }
            if iy + 1 < g.ny() {
                let b = g.cell_index(ix, iy + 1);
                s += (u[a] - u[b]) * (v[a] - v[b]);
            }
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn div_flux_is_linear((g, a, b, fa, fb) in grid_and_fields(), s in -3.0f64..3.0, m in 0.0f64..2.0) {
        let (ua, ub) = (BulkField::from_vec(&g, a).unwrap(), BulkField::from_vec(&g, b).unwrap());
        let (ga, gb) = (SurfaceField::from_vec(&g, fa).unwrap(), SurfaceField::from_vec(&g, fb).unwrap());
        let lhs = div_flux(&ua.axpy(s, &ub), m, &ga.axpy(s, &gb), &g).unwrap();
        let ra = div_flux(&ua, m, &ga, &g).unwrap();
        let rb = div_flux(&ub, m, &gb, &g).unwrap();
        let scale = 1.0 + ra.max_abs() + rb.max_abs();
        for c in 0..g.n_cells() {
            prop_assert!((lhs[c] - ra[c] - s * rb[c]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn bulk_laplacian_summation_by_parts((g, u, phi, _, phi_g) in grid_and_fields()) {
        let h = g.h();
        let phi_b = BulkField::from_vec(&g, phi.clone()).unwrap();
        let phi_gf = SurfaceField::from_vec(&g, phi_g.clone()).unwrap();
        let lap = bulk_laplacian(&phi_b, &phi_gf, &g).unwrap();
        let lhs: f64 = (0..g.n_cells()).map(|c| h * h * u[c] * lap[c]).sum();
        let boundary: f64 = (0..g.n_gamma())
            .map(|i| {
                let c = g.gamma_cell(i);
                h * u[c] * 2.0 * (phi_g[i] - phi[c]) / h
            })
            .sum();
        let rhs = -face_form(&g, &u, &phi) + boundary;
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn div_flux_telescopes((g, mu, _, flux, _) in grid_and_fields(), m in 0.0f64..5.0) {
        let h = g.h();
        let out = div_flux(&BulkField::from_vec(&g, mu).unwrap(), m, &SurfaceField::from_vec(&g, flux.clone()).unwrap(), &g).unwrap();
        let total = h * h * out.sum();
        let expected = -h * flux.iter().sum::<f64>();
        prop_assert!((total - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn surface_laplacian_symmetric_and_nonpositive((g, _, _, u, v) in grid_and_fields(), c in 0.0f64..2.0) {
        let (uf, vf) = (SurfaceField::from_vec(&g, u.clone()).unwrap(), SurfaceField::from_vec(&g, v.clone()).unwrap());
        let lu = surface_laplacian(&uf, c, &g).unwrap();
        let lv = surface_laplacian(&vf, c, &g).unwrap();
        let a: f64 = u.iter().zip(lv.values()).map(|(x, y)| x * y).sum();
        let b: f64 = v.iter().zip(lu.values()).map(|(x, y)| x * y).sum();
        let scale = 1.0 + lu.max_abs() + lv.max_abs();
        prop_assert!((a - b).abs() <= 1e-12 * scale * u.len() as f64);
        let uu: f64 = u.iter().zip(lu.values()).map(|(x, y)| x * y).sum();
        prop_assert!(uu <= 1e-12 * scale);
        prop_assert!(lu.sum().abs() <= 1e-12 * scale * u.len() as f64);
    }

    #[test]
    fn antisymmetric_part_never_dissipates(
        m12 in 0.0f64..1e-4,
        m22 in 0.0f64..1e-4,
        m23 in 0.0f64..1e-4,
        m13 in 0.0f64..1e-4,
        m_reac in 0.0f64..1e-4,
        alpha in 0.1f64..1e3,
        beta in 0.0f64..10.0,
        reactive in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let kind = if reactive { ModelKind::D } else { ModelKind::B };
        let mut p = PhysicalParams::defaults_for(kind);
        p.alpha = alpha;
        p.beta = beta;
        p.m12_2 = m12;
        p.m22_2 = m22;
        p.m23_2 = m23;
        p.m13_s = m13;
        if reactive {
            p.m12_1 = m_reac;
            p.m22_1 = m_reac;
            p.m23_1 = m_reac;
        }
        let g = Grid::reference(8).unwrap();
        let spec = assemble_surface_mobility(&p, kind).unwrap();
        prop_assert!(antisymmetric_dissipation_check(&spec, &g, 10, seed).unwrap() <= 1e-12);
        let whole = spec.discretize(&g).unwrap().to_dense();
        let sum = spec.symmetric_part().discretize(&g).unwrap().to_dense()
            + spec.antisymmetric_part().discretize(&g).unwrap().to_dense();
        for i in 0..whole.nrows() {
            for j in 0..whole.ncols() {
                prop_assert!((whole[(i, j)] - sum[(i, j)]).abs() <= 1e-12 * (1.0 + whole[(i, j)].abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conserving_models_keep_mass(beta in 0.0f64..10.0, alpha in 1.0f64..1e3, seed in any::<u64>(), b_kind in any::<bool>()) {
        let kind = if b_kind { ModelKind::B } else { ModelKind::A };
        let p = PhysicalParams::defaults_for(kind).with_beta(beta);
        let p = PhysicalParams { alpha, ..p };
        let g = Grid::reference(8).unwrap();
        let cfg = SchemeConfig { dt: 1e-3, max_steps: 5, ..SchemeConfig::default() };
        let s0 = initial_condition(&g, &p, seed).unwrap();
        let mut sink = MemorySink::default();
        Integrator::new(&g, &p, kind, &cfg).unwrap().run(&s0, &mut sink).unwrap();
        let m0 = sink.reports[0].mass.total;
        for r in &sink.reports {
            prop_assert!(((r.mass.total - m0) / m0).abs() <= 1e-12);
        }
        for w in sink.reports.windows(2) {
            prop_assert!(w[1].e_quadratized <= w[0].e_quadratized + 1e-10);
        }
    }
}
