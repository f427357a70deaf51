use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SubgoalPattern, SubgoalTracker, REJECTION};
use crate::runtime::{Environment, RuntimeError};

const OBJECTS: [&str; 4] = ["mug", "plate", "apple", "bowl"];
const TARGETS: [&str; 2] = ["shelf", "diningtable"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Where {
    At(usize),
    Held,
}

/// Household chore: find an object, clean it in the sink, put it on the
/// target receptacle.
#[derive(Debug, Clone, Default)]
pub struct CleanPlace {
    ready: bool,
    receptacles: Vec<String>,
    object: String,
    object_at: Option<Where>,
    sink: usize,
    target: usize,
    agent_at: Option<usize>,
    clean: bool,
    subgoals: SubgoalTracker,
}

impl CleanPlace {
    pub const DOMAIN: &'static str = "cleanplace";

    pub fn new() -> Self {
        Self::default()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.receptacles.iter().position(|r| r == name)
    }

    fn placed(&self) -> bool {
        self.object_at == Some(Where::At(self.target))
    }

    fn state_line(&self) -> String {
        let mut s = String::new();
        if self.clean {
            s.push_str(&format!("clean: {}; ", self.object));
        }
        if self.placed() {
            s.push_str(&format!("placed: {} at {}", self.object, self.receptacles[self.target]));
        }
        s
    }

    fn here(&self) -> Option<usize> {
        self.agent_at
    }

    fn object_here(&self) -> bool {
        matches!((&self.object_at, self.agent_at), (Some(Where::At(i)), Some(a)) if *i == a)
    }

    fn holding(&self) -> bool {
        self.object_at == Some(Where::Held)
    }

    fn apply(&mut self, action: &str) -> Option<String> {
        let obj = self.object.clone();
        if action == "look around" {
            return Some(format!(
                "You are in the middle of a room. Looking quickly around you, you see {}.",
                self.receptacles.join(", ")
            ));
        }
        if action == "check valid actions" {
            return Some(format!("Valid actions: {}.", self.valid_actions().join(", ")));
        }
        if action == "inventory" {
            return Some(if self.holding() {
                format!("You are carrying: a {obj}.")
            } else {
                "You are not carrying anything.".into()
            });
        }
        if let Some(r) = action.strip_prefix("go to ") {
            let i = self.index_of(r)?;
            if self.agent_at == Some(i) {
                return None;
            }
            self.agent_at = Some(i);
            let what = if self.object_here() { format!("a {obj}") } else { "nothing".into() };
            return Some(format!("You arrive at {r}. On the {r}, you see {what}."));
        }
        let here = self.here()?;
        let here_name = self.receptacles[here].clone();
        if action == format!("take {obj} from {here_name}") && self.object_here() {
            self.object_at = Some(Where::Held);
            return Some(format!("You pick up the {obj} from the {here_name}."));
        }
        if action == format!("clean {obj} with {here_name}") && here == self.sink && self.holding() {
            self.clean = true;
            return Some(format!("You clean the {obj} using the {here_name}."));
        }
        if action == format!("move {obj} to {here_name}") && self.holding() {
            self.object_at = Some(Where::At(here));
            return Some(format!("You move the {obj} to the {here_name}."));
        }
        None
    }
}

impl Environment for CleanPlace {
    fn domain(&self) -> &str {
        Self::DOMAIN
    }

    fn reset(&mut self, task_seed: u64) -> Result<String, RuntimeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
        let mut numbers: Vec<u32> = (1..=9).collect();
        numbers.shuffle(&mut rng);
        let mut num = numbers.into_iter();
        let mut name = |kind: &str| format!("{kind} {}", num.next().expect("nine numbers"));

        *self = Self::default();
        let target_kind = *TARGETS.choose(&mut rng).expect("non-empty");
        let mut recs = vec![name("countertop"), name("countertop"), name("cabinet"), name("sinkbasin"), name(target_kind)];
        recs.sort();
        self.sink = recs.iter().position(|r| r.starts_with("sinkbasin")).expect("sink exists");
        self.target = recs.iter().position(|r| r.starts_with(target_kind)).expect("target exists");
        let sources: Vec<usize> = (0..recs.len()).filter(|&i| i != self.sink && i != self.target).collect();
        self.object_at = Some(Where::At(*sources.choose(&mut rng).expect("three sources")));
        self.object = format!("{} {}", OBJECTS.choose(&mut rng).expect("non-empty"), rng_number(&mut rng));
        self.receptacles = recs;
        self.subgoals = SubgoalTracker::new(vec![
            SubgoalPattern::Observation(format!("you see a {}", self.object)),
            SubgoalPattern::State(format!("clean: {}", self.object)),
            SubgoalPattern::State(format!("placed: {} at {}", self.object, self.receptacles[self.target])),
        ]);
        self.ready = true;
        Ok(format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            self.receptacles.join(", ")
        ))
    }

    fn step(&mut self, action: &str) -> Result<(String, bool), RuntimeError> {
        if !self.ready {
            return Err(RuntimeError::EnvironmentFault("step before reset".into()));
        }
        let (obs, valid) = match self.apply(action.trim()) {
            Some(obs) => (obs, true),
            None => (REJECTION.to_string(), false),
        };
        let state = self.state_line();
        self.subgoals.update(&obs, &state);
        Ok((obs, valid))
    }

    fn subgoal_status(&self) -> Vec<bool> {
        self.subgoals.status()
    }

    fn goal(&self) -> String {
        let obj = self.object.split(' ').next().unwrap_or_default();
        let target = self.receptacles.get(self.target).map(String::as_str).unwrap_or_default();
        format!("put a clean {obj} in {target}")
    }

    fn task_description(&self) -> String {
        "Interact with a household to solve a task.".into()
    }

    fn valid_actions(&self) -> Vec<String> {
        let mut out = vec!["look around".to_string()];
        for (i, r) in self.receptacles.iter().enumerate() {
            if self.agent_at != Some(i) {
                out.push(format!("go to {r}"));
            }
        }
        if let Some(here) = self.here() {
            let (obj, r) = (&self.object, &self.receptacles[here]);
            if self.object_here() {
                out.push(format!("take {obj} from {r}"));
            }
            if self.holding() {
                if here == self.sink {
                    out.push(format!("clean {obj} with {r}"));
                }
                out.push(format!("move {obj} to {r}"));
            }
        }
        out
    }

    fn expert_action(&self) -> Option<String> {
        if !self.ready {
            return None;
        }
        let status = self.subgoals.status();
        if status.iter().all(|&d| d) {
            return Some("look around".into());
        }
        let obj = &self.object;
        let go = |i: usize| Some(format!("go to {}", self.receptacles[i]));
        match &self.object_at {
            Some(Where::At(i)) if !self.clean || *i != self.target => {
                if self.agent_at == Some(*i) {
                    Some(format!("take {obj} from {}", self.receptacles[*i]))
                } else {
                    go(*i)
                }
            }
            Some(Where::Held) if !self.clean => {
                if self.agent_at == Some(self.sink) {
                    Some(format!("clean {obj} with {}", self.receptacles[self.sink]))
                } else {
                    go(self.sink)
                }
            }
            Some(Where::Held) => {
                if self.agent_at == Some(self.target) {
                    Some(format!("move {obj} to {}", self.receptacles[self.target]))
                } else {
                    go(self.target)
                }
            }
            _ => Some("look around".into()),
        }
    }
}

fn rng_number(rng: &mut ChaCha8Rng) -> u32 {
    use rand::Rng;
    rng.random_range(1..=3)
}
