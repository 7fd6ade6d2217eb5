use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{Conv, ConvBn, Forward, Mode, StoreRef};
use super::params::{ParamId, ParamStore};
use super::{HeadKind, ModelConfig};
use crate::data::{DepthMap, SpikeTensor};
use crate::error::{cfg_err, dim_err, Result};
use crate::numerics::{Graph, Real, Var};

#[derive(Debug, Clone)]
struct Block {
    q: ConvBn,
    k: ConvBn,
    v: ConvBn,
    attn_out: ConvBn,
    mlp1: ConvBn,
    mlp2: ConvBn,
}

#[derive(Debug, Clone)]
enum Head {
    Fusion { levels: Vec<ConvBn>, proj: Conv },
    Linear { conv: ConvBn },
}

/// Learned 1x1 projection from a block's firing rates to the teacher width.
#[derive(Debug, Clone)]
struct Adapter {
    block: usize,
    conv: Conv,
}

/// Recorded vars of one forward pass.
#[derive(Debug, Clone)]
pub struct Outputs {
    /// Block outputs `F_1..F_L`, each `[T*B, D, H/8, W/8]` and binary.
    pub features: Vec<Var>,
    /// Fusion levels `Y_2, Y_3, Y_4` (empty for the linear head).
    pub levels: Vec<Var>,
    /// Depth prediction `[B, 1, H, W]` in (0, 1).
    pub depth: Var,
    /// `(block index, projected rates [B, d, H/8, W/8])` per adapter; block
    /// indices are 1-based.
    pub adapted: Vec<(usize, Var)>,
    /// Parameter leaves bound during the pass.
    pub bindings: Vec<(ParamId, Var)>,
}

/// Spiking backbone, depth head and optional distillation adapters.
#[derive(Debug, Clone)]
pub struct Network<F> {
    cfg: ModelConfig,
    store: ParamStore<F>,
    embed: Vec<ConvBn>,
    blocks: Vec<Block>,
    head: Head,
    adapters: Vec<Adapter>,
    teacher_dim: usize,
}

impl<F: Real> Network<F> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Self::with_adapters(cfg, seed, &[], 0)
    }

    /// Network plus one adapter per 1-based block index in `adapter_blocks`.
    pub fn with_adapters(cfg: &ModelConfig, seed: u64, adapter_blocks: &[usize], teacher_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut embed = Vec::new();
        let mut cin = cfg.in_channels;
        for (i, &cout) in cfg.embed_channels.iter().enumerate() {
            embed.push(ConvBn::new(&mut store, &alloc::format!("embed.{i}"), cin, cout, 3, seed)?);
            cin = cout;
        }
        let d = cfg.dim;
        let hidden = d * cfg.mlp_ratio;
        let mut blocks = Vec::new();
        for i in 1..=cfg.blocks {
            let p = |s: &str| alloc::format!("block{i}.{s}");
            blocks.push(Block {
                q: ConvBn::new(&mut store, &p("q"), d, d, 1, seed)?,
                k: ConvBn::new(&mut store, &p("k"), d, d, 1, seed)?,
                v: ConvBn::new(&mut store, &p("v"), d, d, 1, seed)?,
                attn_out: ConvBn::new(&mut store, &p("attn_out"), d, d, 1, seed)?,
                mlp1: ConvBn::new(&mut store, &p("mlp1"), d, hidden, 1, seed)?,
                mlp2: ConvBn::new(&mut store, &p("mlp2"), hidden, d, 1, seed)?,
            });
        }
        let head = match cfg.head {
            HeadKind::Fusion => {
                let levels = (2..=4)
                    .map(|k| ConvBn::new(&mut store, &alloc::format!("head.fuse{k}"), d, d, cfg.head_kernel, seed))
                    .collect::<Result<Vec<_>>>()?;
                let proj = Conv::new(&mut store, "head.proj", d, 1, 1, seed)?;
                Head::Fusion { levels, proj }
            }
            HeadKind::LinearFcn => Head::Linear { conv: ConvBn::new(&mut store, "head.linear", d, 1, 1, seed)? },
        };
        let mut adapters = Vec::new();
        for &b in adapter_blocks {
            if b == 0 || b > cfg.blocks {
                return Err(cfg_err!("adapter block {b} outside 1..={}", cfg.blocks));
            }
            if teacher_dim == 0 {
                return Err(cfg_err!("adapters need a positive teacher dimension"));
            }
            adapters.push(Adapter { block: b, conv: Conv::new(&mut store, &alloc::format!("kd.proj{b}"), d, teacher_dim, 1, seed)? });
        }
        Ok(Network { cfg: cfg.clone(), store, embed, blocks, head, adapters, teacher_dim })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    pub fn adapter_blocks(&self) -> Vec<usize> {
        self.adapters.iter().map(|a| a.block).collect()
    }

    pub fn teacher_dim(&self) -> usize {
        self.teacher_dim
    }

    /// Same architecture and weights in another float width.
    pub fn cast<G: Real>(&self) -> Network<G> {
        Network {
            cfg: self.cfg.clone(),
            store: self.store.cast(),
            embed: self.embed.clone(),
            blocks: self.blocks.clone(),
            head: self.head.clone(),
            adapters: self.adapters.clone(),
            teacher_dim: self.teacher_dim,
        }
    }

    /// Names of every tensor in checkpoint order.
    pub fn tensor_names(&self) -> Vec<String> {
        self.store.entries().map(|(n, _)| String::from(n)).collect()
    }

    /// Record a training-capable forward pass (batch norm per `mode`;
    /// `Mode::Train` updates running statistics).
    pub fn forward(&mut self, g: &mut Graph<F>, input: Var, mode: Mode) -> Result<Outputs> {
        let arch = Arch { cfg: &self.cfg, embed: &self.embed, blocks: &self.blocks, head: &self.head, adapters: &self.adapters };
        let mut fw = Forward::new(g, StoreRef::Exclusive(&mut self.store), mode);
        arch.run(&mut fw, input)
    }

    /// Read-only forward with running batch-norm statistics.
    pub fn forward_eval(&self, g: &mut Graph<F>, input: Var) -> Result<Outputs> {
        let arch = Arch { cfg: &self.cfg, embed: &self.embed, blocks: &self.blocks, head: &self.head, adapters: &self.adapters };
        let mut fw = Forward::new(g, StoreRef::Shared(&self.store), Mode::Eval);
        arch.run(&mut fw, input)
    }

    /// Check a spike tensor against the configured input geometry.
    pub fn check_input(&self, s: &SpikeTensor) -> Result<()> {
        let c = &self.cfg;
        if s.dims() != [c.timesteps, c.in_channels, c.height, c.width] {
            return Err(cfg_err!(
                "spike tensor {:?} does not match model input [{}, {}, {}, {}]",
                s.dims(),
                c.timesteps,
                c.in_channels,
                c.height,
                c.width
            ));
        }
        Ok(())
    }

    /// Depth prediction for one spike stream (eval mode).
    pub fn infer(&self, spikes: &SpikeTensor) -> Result<DepthMap> {
        self.check_input(spikes)?;
        let mut g = Graph::inference();
        let x = g.constant(SpikeTensor::stack(&[spikes])?);
        let out = self.forward_eval(&mut g, x)?;
        let values = g.value(out.depth).data().iter().map(|v| v.as_f64() as f32).collect();
        DepthMap::new(self.cfg.height, self.cfg.width, values)
    }
}

struct Arch<'a> {
    cfg: &'a ModelConfig,
    embed: &'a [ConvBn],
    blocks: &'a [Block],
    head: &'a Head,
    adapters: &'a [Adapter],
}

impl Arch<'_> {
    fn run<F: Real>(&self, fw: &mut Forward<'_, F>, input: Var) -> Result<Outputs> {
        let c = self.cfg;
        let shape = fw.g.shape(input).to_vec();
        if shape.len() != 4 || !shape[0].is_multiple_of(c.timesteps) || shape[1..] != [c.in_channels, c.height, c.width] {
            return Err(dim_err!(
                "input {:?} must be [T*B, {}, {}, {}] with T = {}",
                shape,
                c.in_channels,
                c.height,
                c.width,
                c.timesteps
            ));
        }
        fw.g.enter("backbone");
        let features = self.backbone(fw, input);
        fw.g.exit();
        let features = features?;

        let t = c.timesteps;
        fw.g.enter("head");
        let mut rates = Vec::with_capacity(features.len());
        for &f in &features {
            rates.push(fw.g.rate_encode(f, t, c.rate_sum)?);
        }
        let (depth, levels) = self.head(fw, &rates)?;
        fw.g.exit();

        let mut adapted = Vec::new();
        for a in self.adapters {
            fw.g.enter("kd");
            fw.g.enter(&alloc::format!("proj{}", a.block));
            let y = fw.conv(&a.conv, rates[a.block - 1]);
            fw.g.exit();
            fw.g.exit();
            adapted.push((a.block, y?));
        }
        Ok(Outputs { features, levels, depth, adapted, bindings: fw.bindings() })
    }

    fn backbone<F: Real>(&self, fw: &mut Forward<'_, F>, input: Var) -> Result<Vec<Var>> {
        let c = self.cfg;
        let t = c.timesteps;
        let mut x = input;
        for (i, stage) in self.embed.iter().enumerate() {
            fw.g.enter(&alloc::format!("embed{i}"));
            let r = (|| {
                let y = fw.conv_bn(stage, x)?;
                let y = fw.g.max_pool2d(y, 2)?;
                fw.g.mlif(y, t, &c.lif)
            })();
            fw.g.exit();
            x = r?;
        }
        let mut features = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            fw.g.enter(&alloc::format!("block{}", i + 1));
            let r = self.block(fw, b, x);
            fw.g.exit();
            x = r?;
            features.push(x);
        }
        Ok(features)
    }

    /// `Y = X (+) SSA(X)`, `Z = Y (+) MLP(Y)`. Every path ends in an MLIF so
    /// both merge operands are spikes; every ConvBN consumes spikes.
    fn block<F: Real>(&self, fw: &mut Forward<'_, F>, b: &Block, x: Var) -> Result<Var> {
        let c = self.cfg;
        let t = c.timesteps;
        let lif = &c.lif;

        fw.g.enter("attn");
        let ssa = (|| {
            let spike = |fw: &mut Forward<'_, F>, l: &ConvBn, name: &str, x: Var| -> Result<Var> {
                fw.g.enter(name);
                let r = fw.conv_bn(l, x).and_then(|y| fw.g.mlif(y, t, lif));
                fw.g.exit();
                r
            };
            let q = spike(fw, &b.q, "q", x)?;
            let k = spike(fw, &b.k, "k", x)?;
            let v = spike(fw, &b.v, "v", x)?;
            fw.g.enter("product");
            let a = fw.g.attention_product(q, k, v, F::of(c.attn_scale)).and_then(|a| fw.g.mlif(a, t, lif));
            fw.g.exit();
            spike(fw, &b.attn_out, "out", a?)
        })();
        fw.g.exit();
        let y = fw.g.residual_merge(x, ssa?, c.merge)?;

        fw.g.enter("mlp");
        let mlp = {
            fw.g.enter("fc1");
            let h = fw.conv_bn(&b.mlp1, y).and_then(|h| fw.g.mlif(h, t, lif));
            fw.g.exit();
            fw.g.enter("fc2");
            let o = h.and_then(|h| fw.conv_bn(&b.mlp2, h)).and_then(|o| fw.g.mlif(o, t, lif));
            fw.g.exit();
            o
        };
        fw.g.exit();
        fw.g.residual_merge(y, mlp?, c.merge)
    }

    fn head<F: Real>(&self, fw: &mut Forward<'_, F>, rates: &[Var]) -> Result<(Var, Vec<Var>)> {
        match self.head {
            Head::Fusion { levels, proj } => {
                if rates.len() != 4 {
                    return Err(cfg_err!("fusion head needs 4 feature stacks, got {}", rates.len()));
                }
                fw.g.enter("fusion");
                let r = (|| {
                    let mut carried = rates[0];
                    let mut ys = Vec::with_capacity(3);
                    for (lvl, conv) in levels.iter().enumerate() {
                        fw.g.enter(&alloc::format!("y{}", lvl + 2));
                        let step = (|| {
                            let up = fw.g.upsample_bilinear(carried, 2)?;
                            let main = fw.conv_bn(conv, up)?;
                            let skip = fw.g.upsample_bilinear(rates[lvl + 1], 2usize << lvl)?;
                            fw.g.add(main, skip)
                        })();
                        fw.g.exit();
                        carried = step?;
                        ys.push(carried);
                    }
                    fw.g.enter("proj");
                    let logits = fw.conv(proj, carried);
                    fw.g.exit();
                    Ok::<_, crate::Error>((fw.g.sigmoid(logits?)?, ys))
                })();
                fw.g.exit();
                r
            }
            Head::Linear { conv } => {
                fw.g.enter("linear");
                let r = (|| {
                    let last = *rates.last().ok_or_else(|| cfg_err!("no features"))?;
                    let y = fw.conv_bn(conv, last)?;
                    let y = fw.g.upsample_bilinear(y, 8)?;
                    fw.g.sigmoid(y)
                })();
                fw.g.exit();
                Ok((r?, vec![]))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::audit_spike_purity;
    use crate::numerics::{OpKind, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        let mut c = ModelConfig::desk(2, 16, 16, 8);
        c.embed_channels = [2, 4, 8];
        c.mlp_ratio = 2;
        c
    }

    fn random_spikes(c: &ModelConfig, seed: u64, p: f64) -> SpikeTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpikeTensor::from_fn(c.timesteps, c.in_channels, c.height, c.width, |_, _, _, _| rng.gen_bool(p))
    }

    #[test]
    fn shapes_binarity_and_purity() {
        let c = small();
        let mut net = Network::<f32>::new(&c, 1).unwrap();
        let s = random_spikes(&c, 3, 0.3);
        let mut g = Graph::new();
        let x = g.constant(SpikeTensor::stack(&[&s]).unwrap());
        let out = net.forward(&mut g, x, Mode::Train).unwrap();
        assert_eq!(out.features.len(), 4);
        for &f in &out.features {
            assert_eq!(g.shape(f), &[2, 8, 2, 2]);
            assert!(g.value(f).is_binary());
        }
        let sizes: Vec<_> = out.levels.iter().map(|&v| g.shape(v)[2]).collect();
        assert_eq!(sizes, vec![4, 8, 16]);
        assert_eq!(g.shape(out.depth), &[1, 1, 16, 16]);
        assert!(g.value(out.depth).data().iter().all(|&v| v > 0.0 && v < 1.0));
        let rep = audit_spike_purity(&g);
        assert!(rep.is_pure(), "{:?}", rep.violations);
        assert!(rep.spike_tensors > 0);
    }

    #[test]
    fn zero_input_gives_half() {
        let c = small();
        let net = Network::<f64>::new(&c, 5).unwrap();
        let d = net.infer(&SpikeTensor::zeros(2, 2, 16, 16)).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn linear_head_has_no_fusion_ops() {
        let mut c = small();
        c.head = HeadKind::LinearFcn;
        c.blocks = 2;
        let net = Network::<f32>::new(&c, 1).unwrap();
        let mut g = Graph::inference();
        let x = g.constant(SpikeTensor::stack(&[&random_spikes(&c, 1, 0.2)]).unwrap());
        let out = net.forward_eval(&mut g, x).unwrap();
        assert_eq!(out.features.len(), 2);
        assert!(out.levels.is_empty());
        assert!(g.trace().all(|e| !e.scope.contains("fusion")));
        assert!(g.trace().any(|e| e.kind == OpKind::Upsample));
    }

    #[test]
    fn skip_paths_are_live() {
        let c = small();
        let net = Network::<f64>::new(&c, 9).unwrap();
        let run = |r4: f64| {
            let mut g = Graph::inference();
            let zero = g.constant(Tensor::zeros(&[1, 8, 2, 2]));
            let last = g.constant(Tensor::full(&[1, 8, 2, 2], r4));
            let arch = Arch { cfg: &net.cfg, embed: &net.embed, blocks: &net.blocks, head: &net.head, adapters: &net.adapters };
            let mut fw = Forward::new(&mut g, StoreRef::Shared(&net.store), Mode::Eval);
            let (y, _) = arch.head(&mut fw, &[zero, zero, zero, last]).unwrap();
            g.value(y).data().to_vec()
        };
        let diff: f64 = run(0.0).iter().zip(run(1.0)).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 0.0);
    }

    #[test]
    fn adapters_project_to_teacher_width() {
        let c = small();
        let mut net = Network::<f32>::with_adapters(&c, 1, &[2, 4], 6).unwrap();
        let mut g = Graph::new();
        let x = g.constant(SpikeTensor::stack(&[&random_spikes(&c, 2, 0.3)]).unwrap());
        let out = net.forward(&mut g, x, Mode::Train).unwrap();
        let blocks: Vec<_> = out.adapted.iter().map(|a| a.0).collect();
        assert_eq!(blocks, vec![2, 4]);
        assert_eq!(g.shape(out.adapted[0].1), &[1, 6, 2, 2]);
        assert!(Network::<f32>::with_adapters(&c, 1, &[5], 6).is_err());
    }
}
