//! Object space, context sampling and the context-constrained selection.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldSpec {
    pub num_properties: usize,
    pub values_per_property: usize,
    pub context_size: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            num_properties: 2,
            values_per_property: 3,
            context_size: 3,
        }
    }
}

impl WorldSpec {
    pub fn num_objects(&self) -> usize {
        self.values_per_property.saturating_pow(self.num_properties as u32)
    }

    pub fn encoding_len(&self) -> usize {
        self.num_properties * self.values_per_property
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_properties == 0 || self.values_per_property == 0 {
            return Err(Error::Config(
                "num_properties and values_per_property must be positive".into(),
            ));
        }
        if self.context_size < 2 {
            return Err(Error::Config(format!(
                "context_size must be at least 2, got {}",
                self.context_size
            )));
        }
        if self.context_size > self.num_objects() {
            return Err(Error::Config(format!(
                "context_size {} exceeds the number of objects {}",
                self.context_size,
                self.num_objects()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectVec {
    pub id: usize,
    pub encoding: Vec<f64>,
}

impl ObjectVec {
    /// Property values decoded from the id, most significant property first.
    pub fn properties(&self, spec: &WorldSpec) -> Vec<usize> {
        decode(self.id, spec)
    }
}

fn decode(mut id: usize, spec: &WorldSpec) -> Vec<usize> {
    let mut props = vec![0; spec.num_properties];
    for p in props.iter_mut().rev() {
        *p = id % spec.values_per_property;
        id /= spec.values_per_property;
    }
    props
}

pub fn object_id(properties: &[usize], spec: &WorldSpec) -> usize {
    properties.iter().fold(0, |acc, &v| acc * spec.values_per_property + v)
}

/// All objects in canonical (mixed-radix) id order.
pub fn enumerate_objects(spec: &WorldSpec) -> Vec<ObjectVec> {
    (0..spec.num_objects())
        .map(|id| {
            let mut encoding = vec![0.0; spec.encoding_len()];
            for (p, v) in decode(id, spec).into_iter().enumerate() {
                encoding[p * spec.values_per_property + v] = 1.0;
            }
            ObjectVec { id, encoding }
        })
        .collect()
}

/// A validated world with its objects enumerated once.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: WorldSpec,
    pub objects: Vec<ObjectVec>,
}

impl World {
    pub fn new(spec: WorldSpec) -> Result<Self> {
        spec.validate()?;
        Ok(World {
            spec,
            objects: enumerate_objects(&spec),
        })
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn encoding(&self, id: usize) -> &[f64] {
        &self.objects[id].encoding
    }
}

/// Context members in presentation order plus the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub object_ids: Vec<usize>,
    pub target_id: usize,
}

impl Context {
    pub fn contains(&self, id: usize) -> bool {
        self.object_ids.contains(&id)
    }

    /// Member ids sorted ascending; contexts are sets for estimation purposes.
    pub fn sorted_ids(&self) -> Vec<usize> {
        let mut ids = self.object_ids.clone();
        ids.sort_unstable();
        ids
    }
}

/// Draws `context_size` distinct objects uniformly without replacement, in a
/// uniformly random presentation order, and a uniform target among them.
pub fn sample_context<R: Rng + ?Sized>(spec: &WorldSpec, rng: &mut R) -> Context {
    let n = spec.num_objects();
    let k = spec.context_size;
    let mut pool: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates: the first k slots are an ordered uniform sample
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    let target_id = pool[rng.random_range(0..k)];
    Context {
        object_ids: pool,
        target_id,
    }
}

/// Restricts a logit vector over all objects to the context and renormalizes.
pub fn constrained_select(logits: &[f64], context: &Context) -> Result<Vec<f64>> {
    if context.object_ids.is_empty() {
        return Err(Error::Logic("empty context".into()));
    }
    if let Some(&bad) = context.object_ids.iter().find(|&&id| id >= logits.len()) {
        return Err(Error::Logic(format!(
            "context member {bad} outside {} logits",
            logits.len()
        )));
    }
    let max = context
        .object_ids
        .iter()
        .map(|&id| logits[id])
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Logic("context logits are all masked".into()));
    }
    let mut out = vec![0.0; logits.len()];
    let mut total = 0.0;
    for &id in &context.object_ids {
        let e = (logits[id] - max).exp();
        out[id] = e;
        total += e;
    }
    for &id in &context.object_ids {
        out[id] /= total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn default_world_has_nine_objects() {
        let spec = WorldSpec::default();
        let objs = enumerate_objects(&spec);
        assert_eq!(objs.len(), 9);
        assert!(objs.iter().all(|o| o.encoding.len() == 6));
    }

    #[test]
    fn single_binary_property() {
        let spec = WorldSpec {
            num_properties: 1,
            values_per_property: 2,
            context_size: 2,
        };
        let objs = enumerate_objects(&spec);
        assert_eq!(objs[0].encoding, vec![1.0, 0.0]);
        assert_eq!(objs[1].encoding, vec![0.0, 1.0]);
    }

    #[test]
    fn one_hot_concatenation() {
        let spec = WorldSpec::default();
        let id = object_id(&[1, 2], &spec);
        let objs = enumerate_objects(&spec);
        assert_eq!(objs[id].encoding, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(objs[id].properties(&spec), vec![1, 2]);
    }

    #[test]
    fn encodings_distinct_and_reconstructible() {
        let spec = WorldSpec {
            num_properties: 3,
            values_per_property: 4,
            context_size: 3,
        };
        let objs = enumerate_objects(&spec);
        for (i, a) in objs.iter().enumerate() {
            assert_eq!(a.encoding.iter().filter(|&&v| v == 1.0).count(), 3);
            assert_eq!(object_id(&a.properties(&spec), &spec), a.id);
            for b in &objs[i + 1..] {
                assert_ne!(a.encoding, b.encoding);
            }
        }
    }

    #[test]
    fn validation() {
        let mut spec = WorldSpec::default();
        spec.context_size = 1;
        assert!(spec.validate().is_err());
        spec.context_size = 10;
        assert!(spec.validate().is_err());
        spec.context_size = 9;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn exhaustive_context_is_whole_world() {
        let spec = WorldSpec {
            num_properties: 2,
            values_per_property: 2,
            context_size: 4,
        };
        let mut rng = StreamRng::seed_from_u64(1);
        let c = sample_context(&spec, &mut rng);
        assert_eq!(c.sorted_ids(), vec![0, 1, 2, 3]);
        assert!(c.contains(c.target_id));
    }

    #[test]
    fn inclusion_and_target_frequencies_are_uniform() {
        let spec = WorldSpec::default();
        let mut rng = StreamRng::seed_from_u64(42);
        let draws = 90_000;
        let mut included = [0usize; 9];
        let mut targeted = [0usize; 9];
        for _ in 0..draws {
            let c = sample_context(&spec, &mut rng);
            assert_eq!(c.sorted_ids().windows(2).filter(|w| w[0] == w[1]).count(), 0);
            for id in c.object_ids {
                included[id] += 1;
            }
            targeted[c.target_id] += 1;
        }
        for o in 0..9 {
            assert!((included[o] as f64 / draws as f64 - 3.0 / 9.0).abs() < 0.01);
            assert!((targeted[o] as f64 / draws as f64 - 1.0 / 9.0).abs() < 0.01);
        }
    }

    #[test]
    fn uniform_logits_split_over_context() {
        let ctx = Context {
            object_ids: vec![1, 2],
            target_id: 1,
        };
        let p = constrained_select(&[0.0; 9], &ctx).unwrap();
        assert_eq!(p[1], 0.5);
        assert_eq!(p[2], 0.5);
        assert_eq!(p.iter().filter(|&&v| v == 0.0).count(), 7);
    }

    #[test]
    fn hand_evaluated_selection() {
        let ctx = Context {
            object_ids: vec![0, 1],
            target_id: 0,
        };
        let mut z = vec![5.0; 9];
        z[0] = 2f64.ln();
        z[1] = 0.0;
        let p = constrained_select(&z, &ctx).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(p[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_context_is_a_logic_error() {
        let ctx = Context {
            object_ids: vec![0, 1],
            target_id: 0,
        };
        let z = vec![f64::NEG_INFINITY; 3];
        assert!(matches!(constrained_select(&z, &ctx), Err(Error::Logic(_))));
        assert!(constrained_select(&[0.0], &ctx).is_err());
    }

    fn context_strategy() -> impl Strategy<Value = (Vec<f64>, Context)> {
        (prop::collection::vec(-1e3f64..1e3, 9), any::<u64>()).prop_map(|(z, seed)| {
            let mut rng = StreamRng::seed_from_u64(seed);
            (z, sample_context(&WorldSpec::default(), &mut rng))
        })
    }

    proptest! {
        #[test]
        fn selection_is_normalized_on_context((z, ctx) in context_strategy()) {
            let p = constrained_select(&z, &ctx).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for (id, v) in p.iter().enumerate() {
                if !ctx.contains(id) {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }

        #[test]
        fn selection_shift_invariant((z, ctx) in context_strategy(), c in -100f64..100.0) {
            let a = constrained_select(&z, &ctx).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = constrained_select(&shifted, &ctx).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
