//! On-disk model container.
//!
//! Two interchangeable encodings of the same content: a binary container
//! (bit-exact round trips) and a JSON form for human inspection. A file
//! holds a system with its initial data, optionally tagged with reduction
//! provenance when it stores a reduced model.
//!
//! Binary layout (all integers little endian):
//!
//! ```text
//! magic   8 bytes  "TDSMOR01"
//! count   u32      number of sections
//! section tag [4 bytes ASCII] + len u64 + payload
//!
//! "SYST"  u32 n, m, p, num_delays; u32 delay[num_delays];
//!         f64 A0[n*n] row-major; f64 A_l[n*n] per delay;
//!         f64 B[n*m]; f64 C[p*n]
//! "INIT"  u32 d_max; then for lag = 0..=d_max:
//!         f64 phi[n]; u32 cols; f64 X[n*cols] row-major; f64 w[cols]
//! "REDU"  u8 method (0 walsh, 1 combbt, 2 grambt, 3 dominant, 4 lifted);
//!         u8 has_order + u32; u8 has_discount + f64; u8 has_tol + f64;
//!         u8 has_build + f64; u8 proj_kind (1 two-sided, 2 partitioned);
//!         two-sided: u32 rows, cols, f64 V[rows*cols], f64 W[rows*cols];
//!         partitioned: u32 blocks, then u32 rows, cols, f64 data per block
//! ```
//!
//! Unknown sections are rejected. The JSON form mirrors the same fields.

use crate::{
    DelaySystem, Error, InitialData, MethodTag, Projection, ReducedSystem, ReductionParams,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TDSMOR01";

/// Reduction provenance stored next to a reduced system.
#[derive(Debug, Clone)]
pub struct ReductionMeta {
    pub method: MethodTag,
    pub params: ReductionParams,
    pub projection: Projection,
}

/// A system (full or reduced) with its initial data.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub system: DelaySystem,
    pub init: InitialData,
    pub reduction: Option<ReductionMeta>,
}

impl ModelFile {
    pub fn full(system: DelaySystem, init: InitialData) -> Self {
        ModelFile {
            system,
            init,
            reduction: None,
        }
    }

    pub fn reduced(r: &ReducedSystem) -> Self {
        ModelFile {
            system: r.system.clone(),
            init: r.init.clone(),
            reduction: Some(ReductionMeta {
                method: r.method,
                params: r.params.clone(),
                projection: r.projection.clone(),
            }),
        }
    }

    pub fn into_reduced(self) -> Option<ReducedSystem> {
        let meta = self.reduction?;
        Some(ReducedSystem {
            system: self.system,
            init: self.init,
            projection: meta.projection,
            method: meta.method,
            params: meta.params,
        })
    }
}

// ---------------------------------------------------------------- binary --

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix_row_major(&mut self, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }
    fn vector(&mut self, v: &DVector<f64>) {
        for x in v.iter() {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], Error> {
        if self.pos + len > self.data.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }
    fn f64(&mut self) -> Result<f64, Error> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn matrix_row_major(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>, Error> {
        let mut m = DMatrix::<f64>::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }
    fn vector(&mut self, len: usize) -> Result<DVector<f64>, Error> {
        let mut v = DVector::<f64>::zeros(len);
        for i in 0..len {
            v[i] = self.f64()?;
        }
        Ok(v)
    }
}

fn method_code(m: MethodTag) -> u8 {
    match m {
        MethodTag::Walsh => 0,
        MethodTag::CombBt => 1,
        MethodTag::GramBt => 2,
        MethodTag::Dominant => 3,
        MethodTag::Lifted => 4,
    }
}

fn method_from_code(c: u8) -> Result<MethodTag, Error> {
    Ok(match c {
        0 => MethodTag::Walsh,
        1 => MethodTag::CombBt,
        2 => MethodTag::GramBt,
        3 => MethodTag::Dominant,
        4 => MethodTag::Lifted,
        other => return Err(Error::Format(format!("unknown method code {other}"))),
    })
}

pub fn to_binary(model: &ModelFile) -> Vec<u8> {
    let mut sections: Vec<([u8; 4], Vec<u8>)> = Vec::new();

    let sys = &model.system;
    let mut w = Writer { buf: Vec::new() };
    let (n, m, p) = (sys.state_dim(), sys.input_dim(), sys.output_dim());
    w.u32(n as u32);
    w.u32(m as u32);
    w.u32(p as u32);
    w.u32(sys.delayed_terms().len() as u32);
    for (_, d) in sys.delayed_terms() {
        w.u32(*d as u32);
    }
    w.matrix_row_major(sys.a0());
    for (a, _) in sys.delayed_terms() {
        w.matrix_row_major(a);
    }
    w.matrix_row_major(sys.b());
    w.matrix_row_major(sys.c());
    sections.push((*b"SYST", w.buf));

    let mut w = Writer { buf: Vec::new() };
    let init = &model.init;
    w.u32(init.max_lag() as u32);
    for lag in 0..=init.max_lag() {
        w.vector(init.phi(lag));
        w.u32(init.basis(lag).ncols() as u32);
        w.matrix_row_major(init.basis(lag));
        w.vector(init.weight(lag));
    }
    sections.push((*b"INIT", w.buf));

    if let Some(red) = &model.reduction {
        let mut w = Writer { buf: Vec::new() };
        w.u8(method_code(red.method));
        match red.params.order_param {
            Some(v) => {
                w.u8(1);
                w.u32(v);
            }
            None => {
                w.u8(0);
                w.u32(0);
            }
        }
        let opt_f64 = |w: &mut Writer, v: Option<f64>| match v {
            Some(x) => {
                w.u8(1);
                w.f64(x);
            }
            None => {
                w.u8(0);
                w.f64(0.0);
            }
        };
        opt_f64(&mut w, red.params.discount);
        opt_f64(&mut w, red.params.tol);
        opt_f64(&mut w, red.params.build_seconds);
        match &red.projection {
            Projection::TwoSided { v, w: wm } => {
                w.u8(1);
                w.u32(v.nrows() as u32);
                w.u32(v.ncols() as u32);
                w.matrix_row_major(v);
                w.matrix_row_major(wm);
            }
            Projection::Partitioned { blocks } => {
                w.u8(2);
                w.u32(blocks.len() as u32);
                for b in blocks {
                    w.u32(b.nrows() as u32);
                    w.u32(b.ncols() as u32);
                    w.matrix_row_major(b);
                }
            }
        }
        sections.push((*b"REDU", w.buf));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (tag, payload) in sections {
        out.extend_from_slice(&tag);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
    }
    out
}

pub fn from_binary(data: &[u8]) -> Result<ModelFile, Error> {
    if data.len() < 12 || &data[..8] != MAGIC {
        return Err(Error::Format("bad magic; not a model file".into()));
    }
    let mut r = Reader { data, pos: 8 };
    let count = r.u32()?;
    let mut system: Option<DelaySystem> = None;
    let mut init: Option<InitialData> = None;
    let mut reduction: Option<ReductionMeta> = None;
    for _ in 0..count {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u64()? as usize;
        let start = r.pos;
        match &tag {
            b"SYST" => {
                let n = r.u32()? as usize;
                let m = r.u32()? as usize;
                let p = r.u32()? as usize;
                let nd = r.u32()? as usize;
                let mut delays = Vec::with_capacity(nd);
                for _ in 0..nd {
                    delays.push(r.u32()? as usize);
                }
                let a0 = r.matrix_row_major(n, n)?;
                let mut delayed = Vec::with_capacity(nd);
                for d in delays {
                    delayed.push((r.matrix_row_major(n, n)?, d));
                }
                let b = r.matrix_row_major(n, m)?;
                let c = r.matrix_row_major(p, n)?;
                system = Some(DelaySystem::new(a0, delayed, b, c)?);
            }
            b"INIT" => {
                let n = system
                    .as_ref()
                    .ok_or_else(|| Error::Format("INIT section before SYST".into()))?
                    .state_dim();
                let d_max = r.u32()? as usize;
                let mut values = Vec::with_capacity(d_max + 1);
                let mut bases = Vec::with_capacity(d_max + 1);
                let mut weights = Vec::with_capacity(d_max + 1);
                for _ in 0..=d_max {
                    values.push(r.vector(n)?);
                    let cols = r.u32()? as usize;
                    bases.push(r.matrix_row_major(n, cols)?);
                    weights.push(r.vector(cols)?);
                }
                init = Some(InitialData::new(values, bases, weights)?);
            }
            b"REDU" => {
                let method = method_from_code(r.u8()?)?;
                let has = r.u8()? != 0;
                let order_v = r.u32()?;
                let order_param = has.then_some(order_v);
                let mut opt_f64 = |r: &mut Reader| -> Result<Option<f64>, Error> {
                    let has = r.u8()? != 0;
                    let v = r.f64()?;
                    Ok(has.then_some(v))
                };
                let discount = opt_f64(&mut r)?;
                let tol = opt_f64(&mut r)?;
                let build_seconds = opt_f64(&mut r)?;
                let proj_kind = r.u8()?;
                let projection = match proj_kind {
                    1 => {
                        let rows = r.u32()? as usize;
                        let cols = r.u32()? as usize;
                        let v = r.matrix_row_major(rows, cols)?;
                        let w = r.matrix_row_major(rows, cols)?;
                        Projection::TwoSided { v, w }
                    }
                    2 => {
                        let nb = r.u32()? as usize;
                        let mut blocks = Vec::with_capacity(nb);
                        for _ in 0..nb {
                            let rows = r.u32()? as usize;
                            let cols = r.u32()? as usize;
                            blocks.push(r.matrix_row_major(rows, cols)?);
                        }
                        Projection::Partitioned { blocks }
                    }
                    other => {
                        return Err(Error::Format(format!("unknown projection kind {other}")))
                    }
                };
                let r_dim = system
                    .as_ref()
                    .ok_or_else(|| Error::Format("REDU section before SYST".into()))?
                    .state_dim();
                reduction = Some(ReductionMeta {
                    method,
                    params: ReductionParams {
                        order_param,
                        discount,
                        r: r_dim,
                        tol,
                        build_seconds,
                    },
                    projection,
                });
            }
            other => {
                return Err(Error::Format(format!(
                    "unknown section tag {:?}",
                    String::from_utf8_lossy(other)
                )));
            }
        }
        if r.pos != start + len {
            return Err(Error::Format("section length mismatch".into()));
        }
    }
    let system = system.ok_or_else(|| Error::Format("missing SYST section".into()))?;
    let init = match init {
        Some(i) => i,
        None => InitialData::zero(system.state_dim(), system.max_delay()),
    };
    Ok(ModelFile {
        system,
        init,
        reduction,
    })
}

// ------------------------------------------------------------------ json --

#[derive(Serialize, Deserialize)]
struct MatrixDto {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl MatrixDto {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixDto {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
    fn to_matrix(&self) -> Result<DMatrix<f64>, Error> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format("matrix entry count mismatch".into()));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct SystemDto {
    n: usize,
    m: usize,
    p: usize,
    delays: Vec<usize>,
    a0: MatrixDto,
    delayed: Vec<MatrixDto>,
    b: MatrixDto,
    c: MatrixDto,
}

#[derive(Serialize, Deserialize)]
struct InitDto {
    /// `phi(0), phi(-1), ...`
    phi: Vec<Vec<f64>>,
    bases: Vec<MatrixDto>,
    weights: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ProjectionDto {
    TwoSided { v: MatrixDto, w: MatrixDto },
    Partitioned { blocks: Vec<MatrixDto> },
}

#[derive(Serialize, Deserialize)]
struct ReductionDto {
    method: String,
    order_param: Option<u32>,
    discount: Option<f64>,
    r: usize,
    tol: Option<f64>,
    build_seconds: Option<f64>,
    projection: ProjectionDto,
}

#[derive(Serialize, Deserialize)]
struct ModelDto {
    format: String,
    version: u32,
    system: SystemDto,
    init: InitDto,
    #[serde(skip_serializing_if = "Option::is_none")]
    reduction: Option<ReductionDto>,
}

pub fn to_json_string(model: &ModelFile) -> Result<String, Error> {
    let sys = &model.system;
    let dto = ModelDto {
        format: "tdsmor".into(),
        version: 1,
        system: SystemDto {
            n: sys.state_dim(),
            m: sys.input_dim(),
            p: sys.output_dim(),
            delays: sys.delays(),
            a0: MatrixDto::from(sys.a0()),
            delayed: sys
                .delayed_terms()
                .iter()
                .map(|(a, _)| MatrixDto::from(a))
                .collect(),
            b: MatrixDto::from(sys.b()),
            c: MatrixDto::from(sys.c()),
        },
        init: InitDto {
            phi: model
                .init
                .values()
                .iter()
                .map(|v| v.as_slice().to_vec())
                .collect(),
            bases: (0..=model.init.max_lag())
                .map(|l| MatrixDto::from(model.init.basis(l)))
                .collect(),
            weights: (0..=model.init.max_lag())
                .map(|l| model.init.weight(l).as_slice().to_vec())
                .collect(),
        },
        reduction: model.reduction.as_ref().map(|red| ReductionDto {
            method: red.method.name().into(),
            order_param: red.params.order_param,
            discount: red.params.discount,
            r: red.params.r,
            tol: red.params.tol,
            build_seconds: red.params.build_seconds,
            projection: match &red.projection {
                Projection::TwoSided { v, w } => ProjectionDto::TwoSided {
                    v: MatrixDto::from(v),
                    w: MatrixDto::from(w),
                },
                Projection::Partitioned { blocks } => ProjectionDto::Partitioned {
                    blocks: blocks.iter().map(MatrixDto::from).collect(),
                },
            },
        }),
    };
    serde_json::to_string_pretty(&dto).map_err(|e| Error::Format(e.to_string()))
}

pub fn from_json_str(text: &str) -> Result<ModelFile, Error> {
    let dto: ModelDto = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if dto.format != "tdsmor" {
        return Err(Error::Format(format!("unknown format tag {}", dto.format)));
    }
    let s = &dto.system;
    if s.delayed.len() != s.delays.len() {
        return Err(Error::Format("delay list and matrices disagree".into()));
    }
    let delayed = s
        .delayed
        .iter()
        .zip(&s.delays)
        .map(|(m, d)| Ok((m.to_matrix()?, *d)))
        .collect::<Result<Vec<_>, Error>>()?;
    let system = DelaySystem::new(s.a0.to_matrix()?, delayed, s.b.to_matrix()?, s.c.to_matrix()?)?;
    let values = dto
        .init
        .phi
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect::<Vec<_>>();
    let bases = dto
        .init
        .bases
        .iter()
        .map(|m| m.to_matrix())
        .collect::<Result<Vec<_>, Error>>()?;
    let weights = dto
        .init
        .weights
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect::<Vec<_>>();
    let init = InitialData::new(values, bases, weights)?;
    let reduction = dto
        .reduction
        .map(|red| -> Result<ReductionMeta, Error> {
            let method = match red.method.as_str() {
                "walsh" => MethodTag::Walsh,
                "combbt" => MethodTag::CombBt,
                "grambt" => MethodTag::GramBt,
                "dominant" => MethodTag::Dominant,
                "lifted-walsh" => MethodTag::Lifted,
                other => return Err(Error::Format(format!("unknown method {other}"))),
            };
            let projection = match red.projection {
                ProjectionDto::TwoSided { v, w } => Projection::TwoSided {
                    v: v.to_matrix()?,
                    w: w.to_matrix()?,
                },
                ProjectionDto::Partitioned { blocks } => Projection::Partitioned {
                    blocks: blocks
                        .iter()
                        .map(|b| b.to_matrix())
                        .collect::<Result<Vec<_>, Error>>()?,
                },
            };
            Ok(ReductionMeta {
                method,
                params: ReductionParams {
                    order_param: red.order_param,
                    discount: red.discount,
                    r: red.r,
                    tol: red.tol,
                    build_seconds: red.build_seconds,
                },
                projection,
            })
        })
        .transpose()?;
    Ok(ModelFile {
        system,
        init,
        reduction,
    })
}

/// Reads a model file, sniffing binary vs JSON from the leading bytes.
pub fn load(path: &Path) -> Result<ModelFile, Error> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        from_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format("neither a binary container nor UTF-8 JSON".into()))?;
        from_json_str(&text)
    }
}

/// Encodes for the given path: `.json` gets the text form, everything else
/// the binary container.
pub fn encode_for_path(model: &ModelFile, path: &Path) -> Result<Vec<u8>, Error> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(to_json_string(model)?.into_bytes())
    } else {
        Ok(to_binary(model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    fn sample_model(with_reduction: bool) -> ModelFile {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 4;
        let mut mat = |r: usize, c: usize| {
            DMatrix::<f64>::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
        };
        let system = DelaySystem::new(
            mat(n, n),
            vec![(mat(n, n), 1), (mat(n, n), 3)],
            mat(n, 2),
            mat(1, n),
        )
        .unwrap();
        let values: Vec<DVector<f64>> = (0..=3)
            .map(|k| {
                if k == 2 {
                    DVector::zeros(n)
                } else {
                    DVector::from_fn(n, |i, _| ((i + k) as f64 * 0.37).sin())
                }
            })
            .collect();
        let init = InitialData::from_values(values).unwrap();
        let reduction = with_reduction.then(|| ReductionMeta {
            method: MethodTag::CombBt,
            params: ReductionParams {
                order_param: Some(20),
                discount: Some(0.81),
                r: 4,
                tol: None,
                build_seconds: Some(0.25),
            },
            projection: Projection::TwoSided {
                v: DMatrix::from_fn(4, 4, |i, j| ((i * 4 + j) as f64 * 0.11).cos()),
                w: DMatrix::from_fn(4, 4, |i, j| ((i * 4 + j) as f64 * 0.23).sin()),
            },
        });
        ModelFile {
            system,
            init,
            reduction,
        }
    }

    #[test]
    fn binary_round_trip_bit_exact() {
        for with_red in [false, true] {
            let model = sample_model(with_red);
            let bytes = to_binary(&model);
            let back = from_binary(&bytes).unwrap();
            let again = to_binary(&back);
            assert_eq!(bytes, again, "binary round trip must be bit exact");
            assert_eq!(back.system.a0(), model.system.a0());
            assert_eq!(back.init.phi(1), model.init.phi(1));
        }
    }

    #[test]
    fn json_round_trip() {
        let model = sample_model(true);
        let text = to_json_string(&model).unwrap();
        let back = from_json_str(&text).unwrap();
        assert_eq!(back.system.a0(), model.system.a0());
        assert_eq!(back.system.delays(), model.system.delays());
        let red = back.reduction.unwrap();
        assert_eq!(red.method, MethodTag::CombBt);
        assert_eq!(red.params.order_param, Some(20));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = to_binary(&sample_model(false));
        bytes[0] = b'X';
        assert!(matches!(from_binary(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = to_binary(&sample_model(false));
        assert!(from_binary(&bytes[..bytes.len() - 9]).is_err());
    }

    #[test]
    fn load_sniffs_format() {
        let dir = tempfile::tempdir().unwrap();
        let model = sample_model(false);
        let bin_path = dir.path().join("m.tds");
        std::fs::write(&bin_path, to_binary(&model)).unwrap();
        let json_path = dir.path().join("m.json");
        std::fs::write(&json_path, to_json_string(&model).unwrap()).unwrap();
        assert_eq!(load(&bin_path).unwrap().system.a0(), model.system.a0());
        assert_eq!(load(&json_path).unwrap().system.a0(), model.system.a0());
    }
}
