//! Small operators of every kind, shared by the integration tests.
#![allow(dead_code)]

use sievelab::assembly::{assemble_limit_operator, assemble_reduced_sieve, assemble_sieve_full, OperatorPair};
use sievelab::geometry::{build_sieve_plan, DLaw, LimitDomain, SievePlan};
use sievelab::kernel::InterfaceKernel;
use sievelab::mesh::{mesh_limit_domain, mesh_sieve, GlueOptions, Grading, LimitMesh};

pub fn interface_domain() -> LimitDomain {
    LimitDomain::unit_square()
}

pub fn boundary_domain() -> LimitDomain {
    LimitDomain::boundary(2, 1.0, 1.0).unwrap()
}

pub fn unit_kernel(dom: &LimitDomain) -> InterfaceKernel {
    InterfaceKernel::constant(1.0, dom.gamma_extent()).unwrap()
}

pub fn plan(dom: &LimitDomain, eps: f64) -> SievePlan {
    build_sieve_plan(dom, eps, DLaw::cubic(), &unit_kernel(dom)).unwrap()
}

pub fn uniform(dom: &LimitDomain, h0: f64) -> LimitMesh {
    mesh_limit_domain(dom, h0, &Grading::none(), 15.0).unwrap()
}

pub fn graded(plan: &SievePlan, h0: f64) -> LimitMesh {
    graded_with(plan, h0, 4, 3)
}

pub fn graded_with(plan: &SievePlan, h0: f64, hole_edges: usize, rings: usize) -> LimitMesh {
    mesh_limit_domain(&plan.domain, h0, &Grading::for_plan(plan, hole_edges, rings), 15.0).unwrap()
}

/// Limit, reduced sieve and glued sieve operators in both topologies at
/// `eps = 1/4` on meshes of size `h0`. The glued meshes grade down to the
/// holes with a single ring.
pub fn all_operators(h0: f64) -> Vec<OperatorPair> {
    let mut ops = Vec::new();
    for dom in [interface_domain(), boundary_domain()] {
        let k = unit_kernel(&dom);
        let p = plan(&dom, 0.25);
        let lm = uniform(&dom, h0);
        ops.push(assemble_limit_operator(&lm, &k).unwrap());
        ops.push(assemble_reduced_sieve(&lm, &p).unwrap());
        let glued = mesh_sieve(&p, &graded_with(&p, h0, 4, 1), &GlueOptions::default()).unwrap();
        ops.push(assemble_sieve_full(&glued).unwrap());
    }
    ops
}
