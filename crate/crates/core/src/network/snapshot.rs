use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::network::Architecture;
use crate::numerics::{Real, RngStream, Tensor};

const MAGIC: &[u8; 8] = b"EPALSNAP";
const FORMAT_VERSION: u32 = 1;
const INIT_STREAM: u64 = 0x1417;

/// One labeled set a network was fine-tuned on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SetTag {
    /// The acquisition set of episode `t` (1-based).
    Episode(u32),
    /// Any other named set, e.g. the initial split.
    Named(String),
}

impl fmt::Display for SetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetTag::Episode(t) => write!(f, "A{t}"),
            SetTag::Named(s) => f.write_str(s),
        }
    }
}

impl SetTag {
    fn parse(s: &str) -> Result<Self> {
        if s.is_empty() || s.contains(['|', '+', '\n']) {
            return Err(Error::Snapshot(format!("bad set tag {s:?}")));
        }
        if let Some(t) = s.strip_prefix('A').and_then(|n| n.parse::<u32>().ok()) {
            return Ok(SetTag::Episode(t));
        }
        Ok(SetTag::Named(s.to_string()))
    }
}

/// Symbolic training history: a root network followed by successive
/// fine-tuning steps, each on a union of labeled sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub root: String,
    pub steps: Vec<Vec<SetTag>>,
}

impl Provenance {
    pub fn root(name: impl Into<String>) -> Self {
        Self {
            root: name.into(),
            steps: Vec::new(),
        }
    }

    /// `self ⊗ {sets}`
    pub fn fine_tuned(&self, sets: Vec<SetTag>) -> Self {
        let mut next = self.clone();
        next.steps.push(sets);
        next
    }

    /// Machine form: `root|A1|A1+A2`.
    pub fn encode(&self) -> String {
        let mut out = self.root.clone();
        for step in &self.steps {
            out.push('|');
            let tags: Vec<String> = step.iter().map(|t| t.to_string()).collect();
            out.push_str(&tags.join("+"));
        }
        out
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut parts = text.split('|');
        let root = parts.next().unwrap_or_default();
        if root.is_empty() || root.contains('+') {
            return Err(Error::Snapshot(format!("bad provenance root in {text:?}")));
        }
        let steps = parts
            .map(|step| step.split('+').map(SetTag::parse).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root: root.to_string(),
            steps,
        })
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.root)?;
        for step in &self.steps {
            let tags: Vec<String> = step.iter().map(|t| t.to_string()).collect();
            write!(f, " ⊗ {{{}}}", tags.join("∪"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub provenance: Provenance,
    /// Episode after which this network was produced, if any.
    pub episode: Option<u32>,
}

/// A fully materialized classifier state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot<T: Real = f64> {
    architecture: Architecture,
    params: Vec<Tensor<T>>,
    pub metadata: Metadata,
}

/// The paper-sized classifier with dropout 0.5, initialized from `seed`.
pub fn build_paper_network(seed: u64) -> NetworkSnapshot<f64> {
    NetworkSnapshot::build(Architecture::paper(0.5), seed)
}

impl<T: Real> NetworkSnapshot<T> {
    /// Fan-in scaled normal weights (variance `1 / fan_in`), zero biases.
    pub fn build(architecture: Architecture, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, INIT_STREAM);
        let params = architecture
            .param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let std = (1.0 / fan_in as f64).sqrt();
                Tensor::from_fn(&shape, |_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::from_f64(z * std)
                })
            })
            .collect();
        Self {
            architecture,
            params,
            metadata: Metadata {
                provenance: Provenance::root(format!("init({seed})")),
                episode: None,
            },
        }
    }

    pub fn from_parts(architecture: Architecture, params: Vec<Tensor<T>>, metadata: Metadata) -> Result<Self> {
        let expected = architecture.param_shapes();
        if expected.len() != params.len()
            || expected.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape())
        {
            return Err(Error::shape(format!(
                "parameters do not match architecture {}",
                architecture.descriptor()
            )));
        }
        Ok(Self {
            architecture,
            params,
            metadata,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::shape("replacement parameters differ in shape"));
        }
        self.params = params;
        Ok(())
    }

    pub fn with_provenance(mut self, provenance: Provenance, episode: Option<u32>) -> Self {
        self.metadata = Metadata {
            provenance,
            episode,
        };
        self
    }

    /// Same parameters, different dropout probability.
    pub fn with_dropout_rate(&self, rate: f64) -> Result<Self> {
        let mut out = self.clone();
        out.architecture = self.architecture.with_dropout_rate(rate)?;
        Ok(out)
    }

    /// Versioned little-endian binary container.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        write_str(&mut out, T::DTYPE);
        write_str(&mut out, &self.architecture.descriptor());
        write_str(&mut out, &self.metadata.provenance.encode());
        let episode = self.metadata.episode.map_or(-1i64, i64::from);
        out.extend_from_slice(&episode.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
            for &d in p.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in p.as_slice() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let dtype = r.string()?;
        if dtype != T::DTYPE {
            return Err(Error::Snapshot(format!(
                "stored as {dtype}, requested {}",
                T::DTYPE
            )));
        }
        let architecture = Architecture::parse(&r.string()?)?;
        let provenance = Provenance::decode(&r.string()?)?;
        let episode = match i64::from_le_bytes(r.take(8)?.try_into().unwrap()) {
            -1 => None,
            e => Some(u32::try_from(e).map_err(|_| Error::Snapshot(format!("bad episode {e}")))?),
        };
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| Ok(u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let raw = r.take(count.checked_mul(T::BYTES).ok_or_else(|| Error::Snapshot("tensor too large".into()))?)?;
            let values = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            params.push(Tensor::new(shape, values)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Snapshot(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::from_parts(
            architecture,
            params,
            Metadata {
                provenance,
                episode,
            },
        )
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Snapshot(format!("truncated at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Snapshot(e.to_string()))
    }
}
