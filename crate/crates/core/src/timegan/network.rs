use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Activation, ParameterStore, RecurrentStackConfig, SequenceNet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Embedder,
    Recovery,
    Generator,
    Supervisor,
    Discriminator,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Embedder, Role::Recovery, Role::Generator, Role::Supervisor, Role::Discriminator];

    pub fn name(self) -> &'static str {
        match self {
            Role::Embedder => "embedder",
            Role::Recovery => "recovery",
            Role::Generator => "generator",
            Role::Supervisor => "supervisor",
            Role::Discriminator => "discriminator",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

/// Architecture of one TimeGAN network, stored alongside its checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: Role,
    pub stack: RecurrentStackConfig,
    pub output_dim: usize,
    pub activation: Activation,
}

/// One network together with its own parameter store.
#[derive(Clone, Debug)]
pub struct Network {
    pub spec: NetworkSpec,
    pub net: SequenceNet,
    pub store: ParameterStore,
}

impl Network {
    /// Builds and initialises a network; the parameters depend only on `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new(seed);
        let net = SequenceNet::new(&mut store, spec.stack.clone(), spec.output_dim, spec.activation, &mut rng)?;
        Ok(Network { spec, net, store })
    }
}
