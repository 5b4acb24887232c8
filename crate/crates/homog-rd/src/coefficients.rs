//! Coefficient laws and structural validation.
//!
//! The oscillating problem is specified by four laws:
//!
//! * a flux `a(x, t, y, tau, lambda)`, monotone in `lambda` with p-growth,
//! * a reaction `g(y, tau, r)`, Lipschitz in `r`, vanishing at `r = 0`, and
//!   centered: its Y-mean vanishes for every (tau, r),
//! * a density weight `rho(y)` with `1/Lambda <= rho <= Lambda` and unit
//!   cell mean,
//! * an initial datum `u0(x)`.
//!
//! Laws come from a small builtin registry (each with numeric parameters) or
//! from scenario expressions. Every law carries flags recording whether it
//! actually varies in `y` and `tau`; the solvers use these to skip per-slice
//! recomputation and fast-scale resolution requirements that would otherwise
//! be vacuous.
//!
//! [`validate_scenario`] samples the structural assumptions with a seeded
//! generator and reports fitted constants (monotonicity modulus, growth
//! constant, Lipschitz constant, density bounds) next to each check, so a
//! failing scenario names the assumption it broke and by how much.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CoeffSpec, ScenarioConfig};
use crate::error::{Error, Result};
use crate::expr::{Ctx, Expr, VAR_R, VAR_T, VAR_TAU, VAR_X1, VAR_X2, VAR_Y1, VAR_Y2};

/// Regularization floor for the p-Laplacian Jacobian: the Newton linearization
/// uses `(delta^2 + |lambda|^2)^((p-2)/2)` in place of `|lambda|^(p-2)` so the
/// tangent operator stays elliptic where the gradient vanishes. Residuals are
/// always evaluated with the true, unregularized flux.
pub const DELTA_REG: f64 = 1e-6;

/// Step for one-sided structural probes of d/dr when no analytic derivative
/// is attached: centered difference with relative step `1e-4 * max(1, |r|)`.
pub const DR_STEP_REL: f64 = 1e-4;

/// Slow variables frozen during cell evaluations.
#[derive(Clone, Copy, Debug, Default)]
pub struct CoeffArgs {
    pub x: [f64; 2],
    pub t: f64,
    pub y: [f64; 2],
    pub tau: f64,
}

impl CoeffArgs {
    pub fn at_cell(y: [f64; 2], tau: f64) -> Self {
        CoeffArgs { x: [0.0; 2], t: 0.0, y, tau }
    }

    fn ctx(&self, r: f64) -> Ctx {
        Ctx::new().y(self.y).tau(self.tau).r(r).x(self.x).t(self.t)
    }
}

/// Scaling regime of the fast time variable, by the exponent k in t/e^k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// 0 < k < 2: tau enters the cell problem as a frozen parameter.
    Sub,
    /// k = 2: the cell problem is parabolic and tau-periodic.
    Critical,
    /// k > 2: the cell problem sees tau-averaged coefficients.
    Super,
}

pub fn regime_of(k: f64) -> Regime {
    if (k - 2.0).abs() <= 1e-12 {
        Regime::Critical
    } else if k < 2.0 {
        Regime::Sub
    } else {
        Regime::Super
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluxKind {
    /// a = b(x, t, y, tau) lambda with a symmetric positive matrix b.
    LinearMatrix,
    /// a = b(x, t, y, tau) |lambda|^(p-2) lambda with a scalar weight b.
    WeightedPLaplacian,
    /// Any other monotone law with p-growth.
    GeneralMonotone,
}

type FluxEval = Arc<dyn Fn(&CoeffArgs, [f64; 2]) -> [f64; 2] + Send + Sync>;
type FluxJac = Arc<dyn Fn(&CoeffArgs, [f64; 2], [f64; 2]) -> [f64; 2] + Send + Sync>;
type MatEval = Arc<dyn Fn(&CoeffArgs) -> [[f64; 2]; 2] + Send + Sync>;
type ScalarEval = Arc<dyn Fn(&CoeffArgs, f64) -> f64 + Send + Sync>;
type PointEval = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Monotone flux law.
#[derive(Clone)]
pub struct FluxLaw {
    pub id: String,
    pub kind: FluxKind,
    /// Growth exponent; the linear kind always has p = 2.
    pub p: f64,
    pub y_dependent: bool,
    pub tau_dependent: bool,
    /// Whether the law reads the slow variables (x, t).
    pub macro_dependent: bool,
    eval: FluxEval,
    jac: FluxJac,
    b_mat: Option<MatEval>,
}

impl FluxLaw {
    /// Flux value a(args, lambda).
    pub fn a(&self, args: &CoeffArgs, lambda: [f64; 2]) -> [f64; 2] {
        (self.eval)(args, lambda)
    }

    /// Regularized tangent applied to a direction: `Da(args, lambda) v`.
    pub fn jac_apply(&self, args: &CoeffArgs, lambda: [f64; 2], v: [f64; 2]) -> [f64; 2] {
        (self.jac)(args, lambda, v)
    }

    pub fn is_linear(&self) -> bool {
        self.kind == FluxKind::LinearMatrix
    }

    /// Coefficient matrix of a linear law.
    pub fn b_matrix(&self, args: &CoeffArgs) -> Option<[[f64; 2]; 2]> {
        self.b_mat.as_ref().map(|f| f(args))
    }
}

impl std::fmt::Debug for FluxLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FluxLaw")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("p", &self.p)
            .field("tau_dependent", &self.tau_dependent)
            .finish()
    }
}

/// Reaction law g(y, tau, r) with its derivative in r.
#[derive(Clone)]
pub struct ReactionLaw {
    pub id: String,
    pub y_dependent: bool,
    pub tau_dependent: bool,
    pub macro_dependent: bool,
    /// Lipschitz constant in r declared by the builtin (None for expressions;
    /// validation fits one either way).
    pub declared_lipschitz: Option<f64>,
    eval: ScalarEval,
    dr: Option<ScalarEval>,
}

impl ReactionLaw {
    pub fn g(&self, args: &CoeffArgs, r: f64) -> f64 {
        (self.eval)(args, r)
    }

    /// d g / d r: analytic for builtins, centered difference otherwise.
    pub fn dg_dr(&self, args: &CoeffArgs, r: f64) -> f64 {
        match &self.dr {
            Some(f) => f(args, r),
            None => {
                let h = DR_STEP_REL * r.abs().max(1.0);
                ((self.eval)(args, r + h) - (self.eval)(args, r - h)) / (2.0 * h)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.id == "zero"
    }
}

impl std::fmt::Debug for ReactionLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReactionLaw").field("id", &self.id).finish()
    }
}

/// Density weight rho(y).
#[derive(Clone)]
pub struct DensityWeight {
    pub id: String,
    pub y_dependent: bool,
    eval: PointEval,
}

impl DensityWeight {
    pub fn rho(&self, y: [f64; 2]) -> f64 {
        (self.eval)(y)
    }
}

impl std::fmt::Debug for DensityWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityWeight").field("id", &self.id).finish()
    }
}

/// Initial datum u0(x) on the macro domain.
#[derive(Clone)]
pub struct InitialDatum {
    pub id: String,
    eval: PointEval,
}

impl InitialDatum {
    pub fn u0(&self, x: [f64; 2]) -> f64 {
        (self.eval)(x)
    }
}

impl std::fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialDatum").field("id", &self.id).finish()
    }
}

/// The four laws of a scenario plus the exponents that shape the pipeline.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    pub flux: FluxLaw,
    pub reaction: ReactionLaw,
    pub density: DensityWeight,
    pub initial: InitialDatum,
    pub dimension: usize,
    pub p: f64,
    pub k: f64,
    pub regime: Regime,
}

impl CoefficientSet {
    /// Whether any law oscillates in y (drives DNS resolution requirements).
    pub fn y_oscillatory(&self) -> bool {
        self.flux.y_dependent || self.reaction.y_dependent || self.density.y_dependent
    }

    /// Whether any law oscillates in tau (drives DNS time resolution and
    /// per-slice cell solves).
    pub fn tau_oscillatory(&self) -> bool {
        self.flux.tau_dependent || self.reaction.tau_dependent
    }
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Scalar weight b(y, tau) shared by the linear and p-Laplacian builtins:
/// `scale * (base + amp * cos(2 pi y1) [* cos(2 pi y2)]) * (1 + tmod * sin(2 pi tau))`.
#[derive(Clone, Copy)]
struct ScalarWeight {
    base: f64,
    amp: f64,
    scale: f64,
    tmod: f64,
    two_d: bool,
}

impl ScalarWeight {
    fn from_spec(spec: &CoeffSpec, two_d: bool, default_base: f64, default_amp: f64) -> Result<Self> {
        let w = ScalarWeight {
            base: spec.param("base", default_base),
            amp: spec.param("amp", default_amp),
            scale: spec.param("scale", 1.0),
            tmod: spec.param("tmod", 0.0),
            two_d,
        };
        if w.base - w.amp.abs() <= 0.0 || w.scale <= 0.0 || w.tmod.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "flux weight is not uniformly elliptic: base={} amp={} scale={} tmod={}",
                w.base, w.amp, w.scale, w.tmod
            )));
        }
        Ok(w)
    }

    fn eval(&self, args: &CoeffArgs) -> f64 {
        let spatial = if self.two_d {
            self.base + self.amp * (TWO_PI * args.y[0]).cos() * (TWO_PI * args.y[1]).cos()
        } else {
            self.base + self.amp * (TWO_PI * args.y[0]).cos()
        };
        self.scale * spatial * (1.0 + self.tmod * (TWO_PI * args.tau).sin())
    }
}

fn linear_isotropic(id: &str, b: impl Fn(&CoeffArgs) -> f64 + Send + Sync + Clone + 'static) -> FluxLaw {
    let b_eval = b.clone();
    let b_jac = b.clone();
    let b_m = b;
    FluxLaw {
        id: id.to_string(),
        kind: FluxKind::LinearMatrix,
        p: 2.0,
        y_dependent: true,
        tau_dependent: true,
        macro_dependent: false,
        eval: Arc::new(move |args, l| {
            let bb = b_eval(args);
            [bb * l[0], bb * l[1]]
        }),
        jac: Arc::new(move |args, _l, v| {
            let bb = b_jac(args);
            [bb * v[0], bb * v[1]]
        }),
        b_mat: Some(Arc::new(move |args| {
            let bb = b_m(args);
            [[bb, 0.0], [0.0, bb]]
        })),
    }
}

fn plap_weighted(
    id: &str,
    p: f64,
    b: impl Fn(&CoeffArgs) -> f64 + Send + Sync + Clone + 'static,
) -> FluxLaw {
    let b_eval = b.clone();
    let b_jac = b;
    FluxLaw {
        id: id.to_string(),
        kind: FluxKind::WeightedPLaplacian,
        p,
        y_dependent: true,
        tau_dependent: true,
        macro_dependent: false,
        eval: Arc::new(move |args, l| {
            let bb = b_eval(args);
            let n2 = l[0] * l[0] + l[1] * l[1];
            let w = if p == 2.0 { 1.0 } else { n2.powf((p - 2.0) / 2.0) };
            [bb * w * l[0], bb * w * l[1]]
        }),
        jac: Arc::new(move |args, l, v| {
            let bb = b_jac(args);
            let m2 = DELTA_REG * DELTA_REG + l[0] * l[0] + l[1] * l[1];
            let w = m2.powf((p - 2.0) / 2.0);
            let dw = (p - 2.0) * m2.powf((p - 4.0) / 2.0);
            let lv = l[0] * v[0] + l[1] * v[1];
            [bb * (w * v[0] + dw * lv * l[0]), bb * (w * v[1] + dw * lv * l[1])]
        }),
        b_mat: None,
    }
}

fn build_flux(cfg: &ScenarioConfig) -> Result<FluxLaw> {
    let spec = &cfg.flux;
    let two_d = cfg.dimension == 2;
    if let Some(id) = spec.id.as_deref() {
        return match id {
            "const" | "identity" => {
                let scale = spec.param("scale", 1.0);
                if scale <= 0.0 {
                    return Err(Error::Config("flux scale must be positive".into()));
                }
                let mut law = linear_isotropic(id, move |_| scale);
                law.y_dependent = false;
                law.tau_dependent = false;
                Ok(law)
            }
            "cos1d" | "cos2d" => {
                let w = ScalarWeight::from_spec(spec, id == "cos2d", 2.0, 1.0)?;
                let y_dep = w.amp != 0.0;
                let tau_dep = w.tmod != 0.0;
                let mut law = linear_isotropic(id, move |args| w.eval(args));
                law.y_dependent = y_dep;
                law.tau_dependent = tau_dep;
                Ok(law)
            }
            "diag" => {
                if !two_d {
                    return Err(Error::Config("flux id \"diag\" needs dimension = 2".into()));
                }
                let b1 = (spec.param("b1_base", 2.0), spec.param("b1_amp", 1.0));
                let b2 = (spec.param("b2_base", 3.0), spec.param("b2_amp", 1.0));
                for (base, amp) in [b1, b2] {
                    if base - amp.abs() <= 0.0 {
                        return Err(Error::Config("diag flux is not uniformly elliptic".into()));
                    }
                }
                let diag = move |args: &CoeffArgs| {
                    [
                        b1.0 + b1.1 * (TWO_PI * args.y[0]).cos(),
                        b2.0 + b2.1 * (TWO_PI * args.y[1]).cos(),
                    ]
                };
                Ok(FluxLaw {
                    id: id.to_string(),
                    kind: FluxKind::LinearMatrix,
                    p: 2.0,
                    y_dependent: b1.1 != 0.0 || b2.1 != 0.0,
                    tau_dependent: false,
                    macro_dependent: false,
                    eval: Arc::new(move |args, l| {
                        let d = diag(args);
                        [d[0] * l[0], d[1] * l[1]]
                    }),
                    jac: Arc::new(move |args, _l, v| {
                        let d = diag(args);
                        [d[0] * v[0], d[1] * v[1]]
                    }),
                    b_mat: Some(Arc::new(move |args| {
                        let d = diag(args);
                        [[d[0], 0.0], [0.0, d[1]]]
                    })),
                })
            }
            "plap" => {
                let w = ScalarWeight::from_spec(spec, two_d, 1.0, 0.0)?;
                let y_dep = w.amp != 0.0;
                let tau_dep = w.tmod != 0.0;
                let p = cfg.p;
                let mut law = plap_weighted(id, p, move |args| w.eval(args));
                law.y_dependent = y_dep;
                law.tau_dependent = tau_dep;
                Ok(law)
            }
            "genmono" => {
                let lin = spec.param("lin", 1.0);
                let cub = spec.param("cub", 1.0);
                if lin <= 0.0 || cub < 0.0 {
                    return Err(Error::Config("genmono flux needs lin > 0 and cub >= 0".into()));
                }
                Ok(FluxLaw {
                    id: id.to_string(),
                    kind: FluxKind::GeneralMonotone,
                    p: 4.0,
                    y_dependent: false,
                    tau_dependent: false,
                    macro_dependent: false,
                    eval: Arc::new(move |_, l| {
                        let n2 = l[0] * l[0] + l[1] * l[1];
                        [(lin + cub * n2) * l[0], (lin + cub * n2) * l[1]]
                    }),
                    jac: Arc::new(move |_, l, v| {
                        let n2 = l[0] * l[0] + l[1] * l[1];
                        let lv = l[0] * v[0] + l[1] * v[1];
                        [
                            (lin + cub * n2) * v[0] + 2.0 * cub * lv * l[0],
                            (lin + cub * n2) * v[1] + 2.0 * cub * lv * l[1],
                        ]
                    }),
                    b_mat: None,
                })
            }
            other => Err(Error::Config(format!(
                "unknown flux id {other:?}; builtins: const, cos1d, cos2d, diag, plap, genmono"
            ))),
        };
    }
    if let Some(b_src) = spec.b_expr.as_deref() {
        let kind = spec.kind.as_deref().unwrap_or("linear");
        let expr = Expr::parse(b_src)?;
        let y_dep = expr.uses_var(VAR_Y1) || expr.uses_var(VAR_Y2);
        let tau_dep = expr.uses_var(VAR_TAU);
        let macro_dep = expr.uses_var(VAR_X1) || expr.uses_var(VAR_X2) || expr.uses_var(VAR_T);
        if expr.uses_var(VAR_R) {
            return Err(Error::Config("flux b_expr must not depend on r".into()));
        }
        let b = move |args: &CoeffArgs| expr.eval(&args.ctx(0.0));
        let mut law = match kind {
            "linear" => linear_isotropic("b_expr", b),
            "plap" => plap_weighted("b_expr", cfg.p, b),
            other => {
                return Err(Error::Config(format!(
                    "unknown flux kind {other:?}; use \"linear\" or \"plap\""
                )))
            }
        };
        law.y_dependent = y_dep;
        law.tau_dependent = tau_dep;
        law.macro_dependent = macro_dep;
        Ok(law)
    } else {
        Err(Error::Config("flux needs an id or a b_expr".into()))
    }
}

fn build_reaction(spec: &CoeffSpec) -> Result<ReactionLaw> {
    if let Some(id) = spec.id.as_deref() {
        return match id {
            "zero" => Ok(ReactionLaw {
                id: id.into(),
                y_dependent: false,
                tau_dependent: false,
                macro_dependent: false,
                declared_lipschitz: Some(0.0),
                eval: Arc::new(|_, _| 0.0),
                dr: Some(Arc::new(|_, _| 0.0)),
            }),
            "rsin" | "rsin2d" => {
                let amp = spec.param("amp", 1.0);
                let tmod = spec.param("tmod", 0.0);
                let two_d = id == "rsin2d";
                let shape = move |args: &CoeffArgs| {
                    let mut s = (TWO_PI * args.y[0]).sin();
                    if two_d {
                        s *= (TWO_PI * args.y[1]).cos();
                    }
                    amp * s * (1.0 + tmod * (TWO_PI * args.tau).sin())
                };
                let shape_dr = shape;
                Ok(ReactionLaw {
                    id: id.into(),
                    y_dependent: true,
                    tau_dependent: tmod != 0.0,
                    macro_dependent: false,
                    declared_lipschitz: Some(amp.abs() * (1.0 + tmod.abs())),
                    eval: Arc::new(move |args, r| r * shape(args)),
                    dr: Some(Arc::new(move |args, _r| shape_dr(args))),
                })
            }
            "tanh" => {
                let amp = spec.param("amp", 1.0);
                let tmod = spec.param("tmod", 0.0);
                let shape = move |args: &CoeffArgs| {
                    amp * (TWO_PI * args.y[0]).sin() * (1.0 + tmod * (TWO_PI * args.tau).sin())
                };
                let shape_dr = shape;
                Ok(ReactionLaw {
                    id: id.into(),
                    y_dependent: true,
                    tau_dependent: tmod != 0.0,
                    macro_dependent: false,
                    declared_lipschitz: Some(amp.abs() * (1.0 + tmod.abs())),
                    eval: Arc::new(move |args, r| r.tanh() * shape(args)),
                    dr: Some(Arc::new(move |args, r| {
                        let t = r.tanh();
                        (1.0 - t * t) * shape_dr(args)
                    })),
                })
            }
            "bad_center" => {
                let offset = spec.param("offset", 1.0);
                Ok(ReactionLaw {
                    id: id.into(),
                    y_dependent: true,
                    tau_dependent: false,
                    macro_dependent: false,
                    declared_lipschitz: Some(1.0 + offset.abs()),
                    eval: Arc::new(move |args, r| r * (offset + (TWO_PI * args.y[0]).sin())),
                    dr: Some(Arc::new(move |args, _| offset + (TWO_PI * args.y[0]).sin())),
                })
            }
            other => Err(Error::Config(format!(
                "unknown reaction id {other:?}; builtins: zero, rsin, rsin2d, tanh, bad_center"
            ))),
        };
    }
    if let Some(src) = spec.expr.as_deref() {
        let expr = Expr::parse(src)?;
        let y_dep = expr.uses_var(VAR_Y1) || expr.uses_var(VAR_Y2);
        let tau_dep = expr.uses_var(VAR_TAU);
        Ok(ReactionLaw {
            id: "expr".into(),
            y_dependent: y_dep,
            tau_dependent: tau_dep,
            macro_dependent: expr.uses_var(VAR_X1) || expr.uses_var(VAR_X2) || expr.uses_var(VAR_T),
            declared_lipschitz: None,
            eval: Arc::new(move |args, r| expr.eval(&args.ctx(r))),
            dr: None,
        })
    } else {
        Err(Error::Config("reaction needs an id or an expr".into()))
    }
}

fn build_density(spec: &CoeffSpec) -> Result<DensityWeight> {
    if let Some(id) = spec.id.as_deref() {
        return match id {
            "one" => Ok(DensityWeight { id: id.into(), y_dependent: false, eval: Arc::new(|_| 1.0) }),
            "cos" | "cos2d" => {
                let amp = spec.param("amp", 0.5);
                if amp.abs() >= 1.0 {
                    return Err(Error::Config(format!(
                        "density amp {amp} leaves no uniform bound away from zero"
                    )));
                }
                let two_d = id == "cos2d";
                Ok(DensityWeight {
                    id: id.into(),
                    y_dependent: amp != 0.0,
                    eval: Arc::new(move |y| {
                        let mut c = (TWO_PI * y[0]).cos();
                        if two_d {
                            c *= (TWO_PI * y[1]).cos();
                        }
                        1.0 + amp * c
                    }),
                })
            }
            other => Err(Error::Config(format!(
                "unknown density id {other:?}; builtins: one, cos, cos2d"
            ))),
        };
    }
    if let Some(src) = spec.expr.as_deref() {
        let expr = Expr::parse(src)?;
        for (idx, name) in [(VAR_TAU, "tau"), (VAR_R, "r"), (VAR_X1, "x1"), (VAR_T, "t")] {
            if expr.uses_var(idx) {
                return Err(Error::Config(format!("density must depend on y only, found {name}")));
            }
        }
        let y_dep = expr.uses_var(VAR_Y1) || expr.uses_var(VAR_Y2);
        Ok(DensityWeight {
            id: "expr".into(),
            y_dependent: y_dep,
            eval: Arc::new(move |y| expr.eval(&Ctx::new().y(y))),
        })
    } else {
        Err(Error::Config("density needs an id or an expr".into()))
    }
}

fn build_initial(spec: &CoeffSpec, domain: [[f64; 2]; 2], dim: usize) -> Result<InitialDatum> {
    if let Some(id) = spec.id.as_deref() {
        return match id {
            "zero" => Ok(InitialDatum { id: id.into(), eval: Arc::new(|_| 0.0) }),
            "sinpi" => {
                let amp = spec.param("amp", 1.0);
                // one sine arch per axis, vanishing on the domain boundary
                Ok(InitialDatum {
                    id: id.into(),
                    eval: Arc::new(move |x| {
                        let mut v = amp;
                        for i in 0..dim {
                            let s = (x[i] - domain[i][0]) / (domain[i][1] - domain[i][0]);
                            v *= (std::f64::consts::PI * s).sin();
                        }
                        v
                    }),
                })
            }
            other => Err(Error::Config(format!(
                "unknown initial id {other:?}; builtins: zero, sinpi"
            ))),
        };
    }
    if let Some(src) = spec.expr.as_deref() {
        let expr = Expr::parse(src)?;
        Ok(InitialDatum { id: "expr".into(), eval: Arc::new(move |x| expr.eval(&Ctx::new().x(x))) })
    } else {
        Err(Error::Config("initial needs an id or an expr".into()))
    }
}

/// Build the coefficient set of a scenario. Fails on unknown ids, malformed
/// expressions, or parameters that break ellipticity outright; the sampled
/// structural checks live in [`validate_scenario`].
pub fn build(cfg: &ScenarioConfig) -> Result<CoefficientSet> {
    Ok(CoefficientSet {
        flux: build_flux(cfg)?,
        reaction: build_reaction(&cfg.reaction)?,
        density: build_density(&cfg.density)?,
        initial: build_initial(&cfg.initial, cfg.domain, cfg.dimension)?,
        dimension: cfg.dimension,
        p: cfg.p,
        k: cfg.k,
        regime: regime_of(cfg.k),
    })
}

/// One structural check: the worst sampled violation against its tolerance.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest violation encountered (0 when the property held everywhere).
    pub worst: f64,
    pub tol: f64,
    pub detail: String,
}

/// Constants fitted from the samples, reported for diagnosis.
#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct FittedConstants {
    /// Monotonicity modulus: min of (a(l) - a(l'), l - l') / |l - l'|^p.
    pub monotonicity_c1: f64,
    /// Growth constant: max of |a(l)| / (1 + |l|^(p-1)).
    pub growth_c2: f64,
    /// Lipschitz constant of g in r.
    pub reaction_lipschitz: f64,
    /// Density bound Lambda = max(sup rho, 1/inf rho).
    pub density_lambda: f64,
    /// Cell mean of rho (must be 1).
    pub density_mean: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub fitted: FittedConstants,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }

    /// Plain-text table, one line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "validation of scenario {:?} (seed {})", self.scenario, self.seed);
        for c in &self.checks {
            let _ = writeln!(
                out,
                "  {}  {:<28} worst {:>10.3e}  tol {:>8.1e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.worst,
                c.tol,
                c.detail
            );
        }
        let f = &self.fitted;
        let _ = writeln!(
            out,
            "  fitted: c1 {:.3e}  c2 {:.3e}  Lip(g) {:.3e}  Lambda {:.3e}  mean(rho) {:.12}",
            f.monotonicity_c1, f.growth_c2, f.reaction_lipschitz, f.density_lambda, f.density_mean
        );
        out
    }
}

/// Sample count per structural check.
const VALIDATE_SAMPLES: usize = 160;

/// Sample the standing assumptions with the scenario seed and report every
/// check. Pure function of (scenario, seed): reruns produce identical
/// reports.
pub fn validate_scenario(cfg: &ScenarioConfig, set: &CoefficientSet) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = set.dimension;
    let p = set.flux.p;
    let tol = cfg.tol.validate;
    let mut checks = Vec::new();
    let mut fitted = FittedConstants::default();

    let rand_args = |rng: &mut ChaCha8Rng| CoeffArgs {
        x: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
        t: rng.gen_range(0.0..1.0),
        y: [rng.gen_range(0.0..1.0), if dim == 2 { rng.gen_range(0.0..1.0) } else { 0.0 }],
        tau: rng.gen_range(0.0..1.0),
    };
    let rand_lambda = |rng: &mut ChaCha8Rng| {
        [rng.gen_range(-4.0..4.0), if dim == 2 { rng.gen_range(-4.0..4.0) } else { 0.0 }]
    };
    let norm = |v: [f64; 2]| (v[0] * v[0] + v[1] * v[1]).sqrt();

    // A1: a(., 0) = 0
    let mut worst = 0.0f64;
    for _ in 0..VALIDATE_SAMPLES {
        let args = rand_args(&mut rng);
        worst = worst.max(norm(set.flux.a(&args, [0.0; 2])));
    }
    checks.push(CheckResult {
        name: "A1 flux vanishes at zero".into(),
        passed: worst <= tol,
        worst,
        tol,
        detail: String::new(),
    });

    // A1: monotonicity, fitting the modulus c1
    let mut worst = 0.0f64;
    let mut c1 = f64::INFINITY;
    for _ in 0..VALIDATE_SAMPLES {
        let args = rand_args(&mut rng);
        let (l1, l2) = (rand_lambda(&mut rng), rand_lambda(&mut rng));
        let d = [l1[0] - l2[0], l1[1] - l2[1]];
        let dn = norm(d);
        if dn < 1e-9 {
            continue;
        }
        let (a1, a2) = (set.flux.a(&args, l1), set.flux.a(&args, l2));
        let ip = (a1[0] - a2[0]) * d[0] + (a1[1] - a2[1]) * d[1];
        worst = worst.max((-ip).max(0.0) / dn.powf(p));
        c1 = c1.min(ip / dn.powf(p));
    }
    fitted.monotonicity_c1 = c1;
    checks.push(CheckResult {
        name: "A1 monotonicity".into(),
        passed: worst <= tol && c1 > 0.0,
        worst,
        tol,
        detail: format!("fitted c1 = {c1:.3e}"),
    });

    // A1: p-growth
    let mut c2 = 0.0f64;
    for _ in 0..VALIDATE_SAMPLES {
        let args = rand_args(&mut rng);
        let l = rand_lambda(&mut rng);
        c2 = c2.max(norm(set.flux.a(&args, l)) / (1.0 + norm(l).powf(p - 1.0)));
    }
    fitted.growth_c2 = c2;
    checks.push(CheckResult {
        name: "A1 p-growth".into(),
        passed: c2.is_finite() && c2 < 1e6,
        worst: c2,
        tol: 1e6,
        detail: format!("fitted c2 = {c2:.3e} at p = {p}"),
    });

    // A1 and A5: periodicity of the flux in y and tau
    let mut worst = 0.0f64;
    for _ in 0..VALIDATE_SAMPLES {
        let args = rand_args(&mut rng);
        let l = rand_lambda(&mut rng);
        let base = set.flux.a(&args, l);
        let scale = norm(base).max(1.0);
        for shift in 0..=dim {
            let mut s = args;
            if shift < dim {
                s.y[shift] += 1.0;
            } else {
                s.tau += 1.0;
            }
            let v = set.flux.a(&s, l);
            worst = worst.max(((v[0] - base[0]).abs()).max((v[1] - base[1]).abs()) / scale);
        }
    }
    checks.push(CheckResult {
        name: "A5 flux periodicity".into(),
        passed: worst <= tol.max(1e-12),
        worst,
        tol: tol.max(1e-12),
        detail: String::new(),
    });

    // A2: Lipschitz in r, plus consistency of the attached derivative
    let mut lip = 0.0f64;
    let mut dr_defect = 0.0f64;
    for _ in 0..VALIDATE_SAMPLES {
        let args = rand_args(&mut rng);
        let (r1, r2): (f64, f64) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        if (r1 - r2).abs() > 1e-9 {
            lip = lip.max((set.reaction.g(&args, r1) - set.reaction.g(&args, r2)).abs() / (r1 - r2).abs());
        }
        let h = DR_STEP_REL * r1.abs().max(1.0);
        let fd = (set.reaction.g(&args, r1 + h) - set.reaction.g(&args, r1 - h)) / (2.0 * h);
        let an = set.reaction.dg_dr(&args, r1);
        dr_defect = dr_defect.max((fd - an).abs() / an.abs().max(1.0));
    }
    fitted.reaction_lipschitz = lip;
    let declared_ok = match set.reaction.declared_lipschitz {
        Some(c) => lip <= c * (1.0 + 1e-6) + tol,
        None => lip < 1e6,
    };
    checks.push(CheckResult {
        name: "A2 reaction Lipschitz in r".into(),
        passed: declared_ok,
        worst: lip,
        tol: set.reaction.declared_lipschitz.unwrap_or(1e6),
        detail: format!("fitted Lipschitz constant {lip:.3e}"),
    });
    checks.push(CheckResult {
        name: "A2 dg/dr consistency".into(),
        passed: dr_defect <= 1e-6,
        worst: dr_defect,
        tol: 1e-6,
        detail: "analytic vs centered difference".into(),
    });

    // A3: g(., ., 0) = 0
    let mut worst = 0.0f64;
    for _ in 0..VALIDATE_SAMPLES {
        let args = rand_args(&mut rng);
        worst = worst.max(set.reaction.g(&args, 0.0).abs());
    }
    checks.push(CheckResult {
        name: "A3 reaction vanishes at r=0".into(),
        passed: worst <= tol,
        worst,
        tol,
        detail: String::new(),
    });

    // A5: periodicity of g and rho
    let mut worst = 0.0f64;
    for _ in 0..VALIDATE_SAMPLES {
        let args = rand_args(&mut rng);
        let r = rng.gen_range(-4.0..4.0);
        let base = set.reaction.g(&args, r);
        let scale = base.abs().max(1.0);
        for shift in 0..=dim {
            let mut s = args;
            if shift < dim {
                s.y[shift] += 1.0;
            } else {
                s.tau += 1.0;
            }
            worst = worst.max((set.reaction.g(&s, r) - base).abs() / scale);
        }
        let rho = set.density.rho(args.y);
        for c in 0..dim {
            let mut y = args.y;
            y[c] += 1.0;
            worst = worst.max((set.density.rho(y) - rho).abs() / rho.abs().max(1.0));
        }
    }
    checks.push(CheckResult {
        name: "A5 reaction/density periodicity".into(),
        passed: worst <= tol.max(1e-12),
        worst,
        tol: tol.max(1e-12),
        detail: String::new(),
    });

    // A4: density bounds and unit mean (exact quadrature on the cell grid)
    let n = cfg.grids.cell_y;
    let total = n.pow(dim as u32);
    let mut inf = f64::INFINITY;
    let mut sup = 0.0f64;
    let mut mean = 0.0;
    for s in 0..total {
        let y = match dim {
            1 => [s as f64 / n as f64, 0.0],
            _ => [(s % n) as f64 / n as f64, (s / n) as f64 / n as f64],
        };
        let v = set.density.rho(y);
        inf = inf.min(v);
        sup = sup.max(v);
        mean += v;
    }
    mean /= total as f64;
    fitted.density_mean = mean;
    fitted.density_lambda = if inf > 0.0 { sup.max(1.0 / inf) } else { f64::INFINITY };
    checks.push(CheckResult {
        name: "A4 density bounds".into(),
        passed: inf > 0.0 && fitted.density_lambda < 1e6,
        worst: if inf > 0.0 { fitted.density_lambda } else { f64::INFINITY },
        tol: 1e6,
        detail: format!("rho in [{inf:.6}, {sup:.6}]"),
    });
    checks.push(CheckResult {
        name: "A4 density unit mean".into(),
        passed: (mean - 1.0).abs() <= tol,
        worst: (mean - 1.0).abs(),
        tol,
        detail: format!("cell mean {mean:.12}"),
    });

    // A5: centering of g over Y for sampled (tau, r)
    let mut worst = 0.0f64;
    let mut taus: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
    taus.push(0.0);
    let mut rs: Vec<f64> = (0..6).map(|_| rng.gen_range(-4.0..4.0)).collect();
    rs.extend_from_slice(&[1.0, -1.0]);
    for &tau in &taus {
        for &r in &rs {
            let mut acc = 0.0;
            let mut sup = 0.0f64;
            for s in 0..total {
                let y = match dim {
                    1 => [s as f64 / n as f64, 0.0],
                    _ => [(s % n) as f64 / n as f64, (s / n) as f64 / n as f64],
                };
                let v = set.reaction.g(&CoeffArgs::at_cell(y, tau), r);
                acc += v;
                sup = sup.max(v.abs());
            }
            worst = worst.max((acc / total as f64).abs() / sup.max(1.0));
        }
    }
    checks.push(CheckResult {
        name: "A5 reaction centering".into(),
        passed: worst <= tol,
        worst,
        tol,
        detail: if worst > tol {
            "Fredholm condition violated: cell mean of g does not vanish".into()
        } else {
            String::new()
        },
    });

    ValidationReport { scenario: cfg.id.clone(), seed: cfg.seed, checks, fitted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn scenario(extra: &str) -> ScenarioConfig {
        ScenarioConfig::parse(&format!("id = \"t\"\ndimension = 1\n{extra}")).unwrap()
    }

    #[test]
    fn regimes_split_at_two() {
        assert_eq!(regime_of(1.0), Regime::Sub);
        assert_eq!(regime_of(1.999), Regime::Sub);
        assert_eq!(regime_of(2.0), Regime::Critical);
        assert_eq!(regime_of(2.5), Regime::Super);
    }

    #[test]
    fn cos1d_flux_matches_formula() {
        let cfg = scenario("[flux]\nid = \"cos1d\"\nbase = 2.0\namp = 1.0\n");
        let set = build(&cfg).unwrap();
        let args = CoeffArgs::at_cell([0.25, 0.0], 0.0);
        let b = 2.0 + (std::f64::consts::FRAC_PI_2).cos();
        let a = set.flux.a(&args, [3.0, 0.0]);
        assert!((a[0] - 3.0 * b).abs() < 1e-12);
        assert!(set.flux.is_linear());
        let m = set.flux.b_matrix(&args).unwrap();
        assert!((m[0][0] - b).abs() < 1e-12 && m[0][1] == 0.0);
        assert!(set.flux.y_dependent && !set.flux.tau_dependent);
    }

    #[test]
    fn expr_flux_matches_builtin() {
        let cfg_a = scenario("[flux]\nid = \"cos1d\"\n");
        let cfg_b = scenario("[flux]\nkind = \"linear\"\nb_expr = \"2 + cos(2*pi*y)\"\n");
        let fa = build(&cfg_a).unwrap().flux;
        let fb = build(&cfg_b).unwrap().flux;
        for i in 0..13 {
            let y = i as f64 / 13.0;
            let args = CoeffArgs::at_cell([y, 0.0], 0.3);
            let (va, vb) = (fa.a(&args, [1.7, 0.0]), fb.a(&args, [1.7, 0.0]));
            assert!((va[0] - vb[0]).abs() < 1e-12);
        }
        assert!(fb.y_dependent && !fb.tau_dependent && !fb.macro_dependent);
    }

    #[test]
    fn plap_jacobian_matches_directional_difference() {
        let cfg = scenario("p = 4.0\n[flux]\nid = \"plap\"\nbase = 1.5\namp = 0.5\n");
        let set = build(&cfg).unwrap();
        let args = CoeffArgs::at_cell([0.11, 0.0], 0.0);
        for l in [[0.8, 0.0], [-2.0, 0.0], [0.5, 0.0]] {
            let v = [0.37, 0.0];
            let h = 1e-6;
            let ap = set.flux.a(&args, [l[0] + h * v[0], 0.0]);
            let am = set.flux.a(&args, [l[0] - h * v[0], 0.0]);
            let fd = (ap[0] - am[0]) / (2.0 * h);
            let j = set.flux.jac_apply(&args, l, v);
            assert!(
                (fd - j[0]).abs() < 1e-5 * fd.abs().max(1.0),
                "jacobian defect at l={l:?}: fd {fd} vs jac {}",
                j[0]
            );
        }
    }

    #[test]
    fn genmono_jacobian_matches_directional_difference_2d() {
        let cfg = ScenarioConfig::parse(
            "id = \"t\"\ndimension = 2\n[flux]\nid = \"genmono\"\nlin = 1.0\ncub = 0.5\n",
        )
        .unwrap();
        let set = build(&cfg).unwrap();
        let args = CoeffArgs::default();
        let l = [1.2, -0.7];
        let v = [0.3, 0.9];
        let h = 1e-6;
        let ap = set.flux.a(&args, [l[0] + h * v[0], l[1] + h * v[1]]);
        let am = set.flux.a(&args, [l[0] - h * v[0], l[1] - h * v[1]]);
        let j = set.flux.jac_apply(&args, l, v);
        for c in 0..2 {
            let fd = (ap[c] - am[c]) / (2.0 * h);
            assert!((fd - j[c]).abs() < 1e-5, "component {c}: {fd} vs {}", j[c]);
        }
    }

    #[test]
    fn linear_scenario_validates() {
        let cfg = scenario(
            "[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[density]\nid = \"cos\"\namp = 0.5\n",
        );
        let set = build(&cfg).unwrap();
        let report = validate_scenario(&cfg, &set);
        assert!(report.passed(), "{}", report.render());
        assert!((report.fitted.monotonicity_c1 - 1.0).abs() < 0.2, "c1 should be near min b = 1");
        assert!((report.fitted.reaction_lipschitz - 1.0).abs() < 0.05);
        assert!((report.fitted.density_lambda - 2.0).abs() < 1e-6);
        assert!((report.fitted.density_mean - 1.0).abs() < 1e-13);
    }

    #[test]
    fn p_laplacian_scenario_validates_with_positive_modulus() {
        let cfg = scenario("p = 4.0\n[flux]\nid = \"plap\"\n[reaction]\nid = \"rsin\"\n");
        let set = build(&cfg).unwrap();
        let report = validate_scenario(&cfg, &set);
        assert!(report.passed(), "{}", report.render());
        assert!(report.fitted.monotonicity_c1 > 0.0);
    }

    #[test]
    fn bad_centering_fails_with_fredholm_message() {
        let cfg = scenario("[reaction]\nid = \"bad_center\"\n");
        let set = build(&cfg).unwrap();
        let report = validate_scenario(&cfg, &set);
        assert!(!report.passed());
        let fail = report.first_failure().unwrap();
        assert_eq!(fail.name, "A5 reaction centering");
        assert!(fail.detail.contains("Fredholm condition violated"));
        assert!(report.render().contains("FAIL"));
    }

    #[test]
    fn structural_violations_are_caught() {
        // density dipping to zero
        let cfg = scenario("[density]\nexpr = \"0.4 + cos(2*pi*y)/2 - 0.91\"\n");
        let set = build(&cfg).unwrap();
        let report = validate_scenario(&cfg, &set);
        assert!(report.checks.iter().any(|c| c.name.contains("A4") && !c.passed));

        // reaction not vanishing at r = 0
        let cfg = scenario("[reaction]\nexpr = \"sin(2*pi*y)*(r + 1)\"\n");
        let set = build(&cfg).unwrap();
        let report = validate_scenario(&cfg, &set);
        assert!(report.checks.iter().any(|c| c.name.contains("A3") && !c.passed));

        // non-periodic density
        let cfg = scenario("[density]\nexpr = \"1 + y/10\"\n");
        let set = build(&cfg).unwrap();
        let report = validate_scenario(&cfg, &set);
        assert!(report.checks.iter().any(|c| c.name.contains("periodicity") && !c.passed));
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(build(&scenario("[flux]\nid = \"cos1d\"\nbase = 1.0\namp = 1.0\n")).is_err());
        assert!(build(&scenario("[flux]\nid = \"nope\"\n")).is_err());
        assert!(build(&scenario("[density]\nid = \"cos\"\namp = 1.0\n")).is_err());
        assert!(build(&scenario("[density]\nexpr = \"1 + tau\"\n")).is_err());
        assert!(build(&scenario("[flux]\nb_expr = \"1 + r\"\n")).is_err());
        assert!(build(&scenario("[reaction]\nid = \"what\"\n")).is_err());
    }

    #[test]
    fn validation_is_deterministic_in_the_seed() {
        let cfg = scenario("[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n");
        let set = build(&cfg).unwrap();
        let a = validate_scenario(&cfg, &set);
        let b = validate_scenario(&cfg, &set);
        assert_eq!(a.render(), b.render());

        let cfg2 = scenario("seed = 8\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n");
        let c = validate_scenario(&cfg2, &build(&cfg2).unwrap());
        assert!(c.passed(), "pass/fail must not depend on the seed");
    }

    #[test]
    fn initial_sinpi_respects_domain() {
        let cfg = ScenarioConfig::parse(
            "id = \"t\"\ndimension = 1\ndomain = [[2.0, 4.0]]\n[initial]\nid = \"sinpi\"\n",
        )
        .unwrap();
        let set = build(&cfg).unwrap();
        assert!(set.initial.u0([2.0, 0.0]).abs() < 1e-15);
        assert!(set.initial.u0([4.0, 0.0]).abs() < 1e-14);
        assert!((set.initial.u0([3.0, 0.0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oscillatory_flags_aggregate() {
        let cfg = scenario("[flux]\nid = \"const\"\n[reaction]\nid = \"zero\"\n");
        let set = build(&cfg).unwrap();
        assert!(!set.y_oscillatory() && !set.tau_oscillatory());
        let cfg = scenario("[flux]\nid = \"cos1d\"\ntmod = 0.5\n");
        let set = build(&cfg).unwrap();
        assert!(set.y_oscillatory() && set.tau_oscillatory());
    }
}
