use crate::Error;
use nalgebra::{DMatrix, DVector};

/// A discrete time-delay system with dense coefficient matrices.
///
/// `delayed_terms` holds the pairs `(A_l, d_l)` with strictly increasing
/// delays `d_l >= 1`. An empty list is a plain linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem {
    a0: DMatrix<f64>,
    delayed: Vec<(DMatrix<f64>, usize)>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl DelaySystem {
    pub fn new(
        a0: DMatrix<f64>,
        delayed: Vec<(DMatrix<f64>, usize)>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self, Error> {
        let n = a0.nrows();
        if a0.ncols() != n {
            return Err(Error::Dimension(format!(
                "A0 must be square, got {}x{}",
                a0.nrows(),
                a0.ncols()
            )));
        }
        let mut last = 0usize;
        for (i, (a, d)) in delayed.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Dimension(format!(
                    "delayed matrix {i} must be {n}x{n}, got {}x{}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if *d < 1 {
                return Err(Error::Argument(format!("delay {i} must be >= 1")));
            }
            if *d <= last && i > 0 {
                return Err(Error::Argument(
                    "delays must be distinct and strictly increasing".into(),
                ));
            }
            last = *d;
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!(
                "C must have {n} columns, got {}",
                c.ncols()
            )));
        }
        Ok(DelaySystem { a0, delayed, b, c })
    }

    pub fn state_dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Largest delay, zero when the system is delay free.
    pub fn max_delay(&self) -> usize {
        self.delayed.last().map_or(0, |(_, d)| *d)
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn delayed_terms(&self) -> &[(DMatrix<f64>, usize)] {
        &self.delayed
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Delay list without the matrices.
    pub fn delays(&self) -> Vec<usize> {
        self.delayed.iter().map(|(_, d)| *d).collect()
    }
}

/// Prescribed state history `phi(j)`, `j in [-d_max, 0]`, together with the
/// basis factorization `phi(j) = X_j w_j` used by the Gramian machinery.
///
/// Entries are indexed by the lag `-j`, so index 0 is `phi(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    values: Vec<DVector<f64>>,
    bases: Vec<DMatrix<f64>>,
    weights: Vec<DVector<f64>>,
}

impl InitialData {
    /// Builds initial data from the raw history; each nonzero `phi(j)` gets
    /// the rank-one basis `X_j = phi(j)/|phi(j)|`, zero vectors get an empty
    /// basis block.
    pub fn from_values(values: Vec<DVector<f64>>) -> Result<Self, Error> {
        if values.is_empty() {
            return Err(Error::Argument("initial data needs at least phi(0)".into()));
        }
        let n = values[0].len();
        let mut bases = Vec::with_capacity(values.len());
        let mut weights = Vec::with_capacity(values.len());
        for v in &values {
            if v.len() != n {
                return Err(Error::Dimension(
                    "initial vectors must share the state dimension".into(),
                ));
            }
            let norm = v.norm();
            if norm == 0.0 {
                bases.push(DMatrix::<f64>::zeros(n, 0));
                weights.push(DVector::<f64>::zeros(0));
            } else {
                bases.push(DMatrix::from_column_slice(n, 1, (v / norm).as_slice()));
                weights.push(DVector::from_element(1, norm));
            }
        }
        Ok(InitialData {
            values,
            bases,
            weights,
        })
    }

    /// Builds initial data with caller-supplied bases; checks
    /// `phi(j) = X_j w_j` to 1e-12 relative.
    pub fn new(
        values: Vec<DVector<f64>>,
        bases: Vec<DMatrix<f64>>,
        weights: Vec<DVector<f64>>,
    ) -> Result<Self, Error> {
        if values.is_empty() {
            return Err(Error::Argument("initial data needs at least phi(0)".into()));
        }
        if bases.len() != values.len() || weights.len() != values.len() {
            return Err(Error::Argument(
                "values, bases and weights must have equal length".into(),
            ));
        }
        let n = values[0].len();
        for ((v, x), w) in values.iter().zip(&bases).zip(&weights) {
            if v.len() != n || x.nrows() != n || x.ncols() != w.len() {
                return Err(Error::Dimension(
                    "initial data blocks have inconsistent dimensions".into(),
                ));
            }
            let resid = (v - x * w).norm();
            if resid > 1e-12 * (1.0 + v.norm()) {
                return Err(Error::Argument(format!(
                    "phi does not lie in the span of its basis (residual {resid:.3e})"
                )));
            }
        }
        Ok(InitialData {
            values,
            bases,
            weights,
        })
    }

    pub fn zero(n: usize, d_max: usize) -> Self {
        InitialData {
            values: (0..=d_max).map(|_| DVector::zeros(n)).collect(),
            bases: (0..=d_max).map(|_| DMatrix::zeros(n, 0)).collect(),
            weights: (0..=d_max).map(|_| DVector::zeros(0)).collect(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.values[0].len()
    }

    /// Largest lag stored; histories cover `j in [-d_max, 0]`.
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    /// `phi(-lag)`.
    pub fn phi(&self, lag: usize) -> &DVector<f64> {
        &self.values[lag]
    }

    /// Basis block `X_{-lag}`.
    pub fn basis(&self, lag: usize) -> &DMatrix<f64> {
        &self.bases[lag]
    }

    pub fn weight(&self, lag: usize) -> &DVector<f64> {
        &self.weights[lag]
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// True when every history vector vanishes.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|&x| x == 0.0))
    }

    /// Applies a left projection: `phi_hat(j) = W^T phi(j)`, with the bases
    /// projected the same way so the factorization survives.
    pub fn project(&self, w: &DMatrix<f64>) -> InitialData {
        let wt = w.transpose();
        InitialData {
            values: self.values.iter().map(|v| &wt * v).collect(),
            bases: self.bases.iter().map(|x| &wt * x).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Pads or truncates the history to lags `0..=d_max`.
    pub fn with_max_lag(&self, d_max: usize) -> InitialData {
        let n = self.state_dim();
        let mut out = self.clone();
        out.values.truncate(d_max + 1);
        out.bases.truncate(d_max + 1);
        out.weights.truncate(d_max + 1);
        while out.values.len() <= d_max {
            out.values.push(DVector::zeros(n));
            out.bases.push(DMatrix::zeros(n, 0));
            out.weights.push(DVector::zeros(0));
        }
        out
    }
}

/// One scalar input channel in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSignal {
    Zero,
    /// `a * t * sin(b * t)`
    RampSine { amplitude: f64, frequency: f64 },
    /// `exp(c * t)`
    Exp { rate: f64 },
}

impl ChannelSignal {
    fn eval(&self, t: usize) -> f64 {
        let tf = t as f64;
        match self {
            ChannelSignal::Zero => 0.0,
            ChannelSignal::RampSine {
                amplitude,
                frequency,
            } => amplitude * tf * (frequency * tf).sin(),
            ChannelSignal::Exp { rate } => (rate * tf).exp(),
        }
    }
}

/// Input signal: either closed-form channels or a sampled sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    ClosedForm { channels: Vec<ChannelSignal> },
    /// Columns are the samples `u(0), u(1), ...`.
    Samples { data: DMatrix<f64> },
}

impl InputSignal {
    pub fn zero(m: usize) -> Self {
        InputSignal::ClosedForm {
            channels: vec![ChannelSignal::Zero; m],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputSignal::ClosedForm { channels } => channels.len(),
            InputSignal::Samples { data } => data.nrows(),
        }
    }

    /// Number of steps the signal is defined for; closed forms are unbounded.
    pub fn available_horizon(&self) -> Option<usize> {
        match self {
            InputSignal::ClosedForm { .. } => None,
            InputSignal::Samples { data } => Some(data.ncols()),
        }
    }

    pub fn eval(&self, t: usize) -> Result<DVector<f64>, Error> {
        match self {
            InputSignal::ClosedForm { channels } => {
                Ok(DVector::from_iterator(channels.len(), channels.iter().map(|c| c.eval(t))))
            }
            InputSignal::Samples { data } => {
                if t >= data.ncols() {
                    return Err(Error::Argument(format!(
                        "sampled input has {} steps, requested t = {t}",
                        data.ncols()
                    )));
                }
                Ok(DVector::from(data.column(t)))
            }
        }
    }
}

/// Time-indexed simulation result. Outputs are always retained, states only
/// on request (full-order benchmark states at n = 1500 are worth megabytes
/// per thousand steps).
#[derive(Debug, Clone)]
pub struct Trajectory {
    outputs: Vec<DVector<f64>>,
    states: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub(crate) fn new(outputs: Vec<DVector<f64>>, states: Option<Vec<DVector<f64>>>) -> Self {
        Trajectory { outputs, states }
    }

    /// `y(t)` for `t = 0..=horizon`.
    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn states(&self) -> Option<&[DVector<f64>]> {
        self.states.as_deref()
    }

    pub fn horizon(&self) -> usize {
        self.outputs.len() - 1
    }

    pub fn output_dim(&self) -> usize {
        self.outputs[0].len()
    }
}

/// How a reduced model was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Walsh,
    CombBt,
    GramBt,
    Dominant,
    Lifted,
}

impl MethodTag {
    pub fn name(self) -> &'static str {
        match self {
            MethodTag::Walsh => "walsh",
            MethodTag::CombBt => "combbt",
            MethodTag::GramBt => "grambt",
            MethodTag::Dominant => "dominant",
            MethodTag::Lifted => "lifted-walsh",
        }
    }
}

/// Projection matrices attached to a reduced model.
///
/// Two-sided projections store trial/test bases `V`, `W` with
/// `A_hat = W^T A V`. The lifted comparator instead keeps the row blocks
/// `V_0..V_d` of the lifted projection basis, because its reduced matrices
/// mix different blocks and cannot be reproduced from a single pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    TwoSided { v: DMatrix<f64>, w: DMatrix<f64> },
    Partitioned { blocks: Vec<DMatrix<f64>> },
}

/// Parameter record carried by every reduced model so a run can be
/// reproduced from its own artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionParams {
    /// Walsh order `N` or Laguerre term count `K`, whichever applies.
    pub order_param: Option<u32>,
    /// Laguerre discount factor.
    pub discount: Option<f64>,
    /// Reduced dimension.
    pub r: usize,
    /// Rank tolerance used when the projection was built.
    pub tol: Option<f64>,
    /// Wall-clock seconds spent constructing the reduction.
    pub build_seconds: Option<f64>,
}

/// A reduced model together with its projection and provenance.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub system: DelaySystem,
    pub init: InitialData,
    pub projection: Projection,
    pub method: MethodTag,
    pub params: ReductionParams,
}

impl ReducedSystem {
    pub fn order(&self) -> usize {
        self.system.state_dim()
    }

    /// Largest relative deviation between the stored reduced matrices and
    /// the ones recomputed from the stored projection. `None` for
    /// partitioned (lifted) projections.
    pub fn projection_residual(&self, full: &DelaySystem) -> Option<f64> {
        let (v, w) = match &self.projection {
            Projection::TwoSided { v, w } => (v, w),
            Projection::Partitioned { .. } => return None,
        };
        let wt = w.transpose();
        let rel = |got: &DMatrix<f64>, expect: DMatrix<f64>| -> f64 {
            let denom = expect.norm().max(1e-300);
            (got - expect).norm() / denom
        };
        let mut worst = rel(self.system.a0(), &wt * full.a0() * v);
        for ((ar, dr), (af, df)) in self
            .system
            .delayed_terms()
            .iter()
            .zip(full.delayed_terms())
        {
            debug_assert_eq!(dr, df);
            worst = worst.max(rel(ar, &wt * af * v));
        }
        worst = worst.max(rel(self.system.b(), &wt * full.b()));
        worst = worst.max(rel(self.system.c(), full.c() * v));
        Some(worst)
    }
}

/// Delay-free reformulation on the stacked state
/// `z(t) = [x(t); x(t-1); ...; x(t-d)]`.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    pub a_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub c_bar: DMatrix<f64>,
    pub z0: DVector<f64>,
}

impl LiftedSystem {
    pub fn dim(&self) -> usize {
        self.a_bar.nrows()
    }

    /// The lifted system viewed as a (delay-free) `DelaySystem`.
    pub fn as_delay_system(&self) -> DelaySystem {
        DelaySystem::new(
            self.a_bar.clone(),
            Vec::new(),
            self.b_bar.clone(),
            self.c_bar.clone(),
        )
        .expect("lifted blocks are consistent by construction")
    }

    pub fn initial_data(&self) -> InitialData {
        InitialData::from_values(vec![self.z0.clone()]).expect("nonempty")
    }
}

/// Builds the companion-style lifted system. Each `A_l` sits in block column
/// `d_l` of the first block row (0-based), identity blocks on the
/// subdiagonal shift the history.
pub fn lift_to_linear(system: &DelaySystem, init: &InitialData) -> LiftedSystem {
    let n = system.state_dim();
    let d_max = system.max_delay();
    let nl = n * (d_max + 1);
    let mut a_bar = DMatrix::<f64>::zeros(nl, nl);
    a_bar.view_mut((0, 0), (n, n)).copy_from(system.a0());
    for (a, d) in system.delayed_terms() {
        let mut block = a_bar.view_mut((0, n * d), (n, n));
        block += a;
    }
    for b in 0..d_max {
        a_bar
            .view_mut((n * (b + 1), n * b), (n, n))
            .copy_from(&DMatrix::identity(n, n));
    }
    let mut b_bar = DMatrix::<f64>::zeros(nl, system.input_dim());
    b_bar
        .view_mut((0, 0), (n, system.input_dim()))
        .copy_from(system.b());
    let mut c_bar = DMatrix::<f64>::zeros(system.output_dim(), nl);
    c_bar
        .view_mut((0, 0), (system.output_dim(), n))
        .copy_from(system.c());
    let init = init.with_max_lag(d_max);
    let mut z0 = DVector::<f64>::zeros(nl);
    for lag in 0..=d_max {
        z0.rows_mut(n * lag, n).copy_from(init.phi(lag));
    }
    LiftedSystem {
        a_bar,
        b_bar,
        c_bar,
        z0,
    }
}
