use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SubgoalPattern, SubgoalTracker, REJECTION};
use crate::runtime::{Environment, RuntimeError};

const DISTRACTORS: [&str; 4] = ["kitchen", "garden", "bedroom", "library"];

/// A small building: fetch the key, unlock the door, enter the vault.
///
/// Passages along the chain `hall -> storeroom -> corridor -> vault` are one
/// way. The key lies in the hall or the storeroom; in the latter case the
/// hall may also have a side room reachable in both directions. Nobody moves
/// down the chain while the key is still lying in the room. The vault opens
/// once the corridor door is unlocked. "look around" only works in a room not yet seen.
#[derive(Debug, Clone, Default)]
pub struct KeyDoor {
    ready: bool,
    adjacency: BTreeMap<String, Vec<String>>,
    chain: BTreeSet<(String, String)>,
    hall: String,
    key_room: String,
    door_room: String,
    goal_room: String,
    agent_room: String,
    holding_key: bool,
    door_open: bool,
    observed: BTreeSet<String>,
    subgoals: SubgoalTracker,
}

impl KeyDoor {
    pub const DOMAIN: &'static str = "keydoor";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn key_room(&self) -> &str {
        &self.key_room
    }

    pub fn door_room(&self) -> &str {
        &self.door_room
    }

    pub fn goal_room(&self) -> &str {
        &self.goal_room
    }

    pub fn agent_room(&self) -> &str {
        &self.agent_room
    }

    pub fn holding_key(&self) -> bool {
        self.holding_key
    }

    pub fn door_open(&self) -> bool {
        self.door_open
    }

    pub fn subgoal_patterns(&self) -> &[SubgoalPattern] {
        self.subgoals.patterns()
    }

    fn one_way(&mut self, a: &str, b: &str) {
        self.adjacency.entry(a.into()).or_default().push(b.into());
        self.chain.insert((a.into(), b.into()));
    }

    fn two_way(&mut self, a: &str, b: &str) {
        self.adjacency.entry(a.into()).or_default().push(b.into());
        self.adjacency.entry(b.into()).or_default().push(a.into());
    }

    fn exits(&self, room: &str) -> Vec<String> {
        let mut out: Vec<String> = self.adjacency.get(room).cloned().unwrap_or_default();
        out.sort();
        out
    }

    fn reachable(&self, room: &str) -> Vec<String> {
        let key_left_here = room == self.key_room && !self.holding_key;
        self.exits(room)
            .into_iter()
            .filter(|r| *r != self.goal_room || self.door_open)
            .filter(|r| !(key_left_here && self.chain.contains(&(room.to_string(), r.clone()))))
            .collect()
    }

    fn state_line(&self) -> String {
        format!(
            "location: {}; carrying: {}; door: {}",
            self.agent_room,
            if self.holding_key { "key" } else { "nothing" },
            if self.door_open { "open" } else { "closed" }
        )
    }

    fn contents(&self) -> String {
        let mut out = String::new();
        if self.agent_room == self.key_room && !self.holding_key {
            out.push_str(" On the floor, you see a key.");
        }
        if self.agent_room == self.door_room {
            let state = if self.door_open { "An open" } else { "A locked" };
            out.push_str(&format!(" {state} door leads to {}.", self.goal_room));
        }
        out
    }

    /// The key can be taken once the agent has seen it lying in the room.
    fn key_visible(&self) -> bool {
        self.agent_room == self.key_room && !self.holding_key && self.observed.contains(&self.key_room)
    }

    fn next_hop(&self, target: &str) -> Option<String> {
        let mut prev: BTreeMap<String, String> = BTreeMap::new();
        let mut queue = VecDeque::from([self.agent_room.clone()]);
        let mut seen = BTreeSet::from([self.agent_room.clone()]);
        while let Some(room) = queue.pop_front() {
            if room == target {
                let mut hop = room;
                while prev.get(&hop) != Some(&self.agent_room) {
                    hop = prev.get(&hop)?.clone();
                }
                return Some(hop);
            }
            for next in self.reachable(&room) {
                if seen.insert(next.clone()) {
                    prev.insert(next.clone(), room.clone());
                    queue.push_back(next);
                }
            }
        }
        None
    }

    fn apply(&mut self, action: &str) -> Option<String> {
        if action == "look around" && !self.observed.contains(&self.agent_room) {
            self.observed.insert(self.agent_room.clone());
            return Some(format!(
                "You are in {}.{} Exits: {}.",
                self.agent_room,
                self.contents(),
                self.exits(&self.agent_room).join(", ")
            ));
        }
        if action == "check valid actions" {
            return Some(format!("Valid actions: {}.", self.valid_actions().join(", ")));
        }
        if action == "inventory" {
            return Some(if self.holding_key {
                "You are carrying: a key.".into()
            } else {
                "You are carrying nothing.".into()
            });
        }
        if action == "take key" && self.key_visible() {
            self.holding_key = true;
            return Some("You pick up the key.".into());
        }
        if action == "open door" && self.agent_room == self.door_room && self.holding_key && !self.door_open {
            self.door_open = true;
            return Some(format!("You unlock the door with the key. The way to {} is open.", self.goal_room));
        }
        if let Some(room) = action.strip_prefix("go to ") {
            if self.reachable(&self.agent_room).iter().any(|r| r == room) {
                self.agent_room = room.to_string();
                self.observed.insert(room.to_string());
                return Some(format!("You arrive at {room}.{}", self.contents()));
            }
        }
        None
    }
}

impl Environment for KeyDoor {
    fn domain(&self) -> &str {
        Self::DOMAIN
    }

    fn reset(&mut self, task_seed: u64) -> Result<String, RuntimeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
        let mut numbers: Vec<u32> = (1..=9).collect();
        numbers.shuffle(&mut rng);
        let mut num = numbers.into_iter();
        let mut name = |kind: &str| format!("{kind} {}", num.next().expect("nine room numbers"));

        *self = Self::default();
        self.hall = name("hall");
        let storeroom = name("storeroom");
        self.door_room = name("corridor");
        self.goal_room = name("vault");
        let (hall, door, goal) = (self.hall.clone(), self.door_room.clone(), self.goal_room.clone());
        self.one_way(&hall, &storeroom);
        self.one_way(&storeroom, &door);
        self.one_way(&door, &goal);
        let key_in_hall = rng.random_bool(0.5);
        if !key_in_hall && rng.random_bool(0.5) {
            let kind = *DISTRACTORS.choose(&mut rng).expect("non-empty");
            self.two_way(&hall, &name(kind));
        }
        self.key_room = if key_in_hall { hall.clone() } else { storeroom };
        self.agent_room = hall.clone();
        self.subgoals = SubgoalTracker::new(vec![
            SubgoalPattern::Observation("you see a key".into()),
            SubgoalPattern::State("carrying: key".into()),
            SubgoalPattern::State("door: open".into()),
            SubgoalPattern::State(format!("location: {goal}")),
        ]);
        self.ready = true;
        Ok(format!("You are in {hall}."))
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
        format!("unlock the door in {} and enter {}", self.door_room, self.goal_room)
    }

    fn task_description(&self) -> String {
        "You are exploring a small building. Find the key, unlock the locked door and reach the room behind it.".into()
    }

    fn valid_actions(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.observed.contains(&self.agent_room) {
            out.push("look around".to_string());
        }
        out.extend(self.reachable(&self.agent_room).into_iter().map(|r| format!("go to {r}")));
        if self.key_visible() {
            out.push("take key".into());
        }
        if self.agent_room == self.door_room && self.holding_key && !self.door_open {
            out.push("open door".into());
        }
        out
    }

    /// Shortest completing plan: look around an unobserved start room, fetch
    /// the key, open the door, enter the vault.
    fn expert_action(&self) -> Option<String> {
        if !self.ready {
            return None;
        }
        let look = || Some("look around".to_string());
        if self.subgoals.status().iter().all(|&d| d) {
            return look();
        }
        let go = |room: &str| self.next_hop(room).map(|r| format!("go to {r}"));
        if !self.holding_key {
            if !self.observed.contains(&self.key_room) && !self.observed.contains(&self.agent_room) {
                return look();
            }
            if self.agent_room == self.key_room {
                return Some("take key".into());
            }
            return go(&self.key_room.clone());
        }
        if !self.door_open {
            if self.agent_room == self.door_room {
                return Some("open door".into());
            }
            return go(&self.door_room.clone());
        }
        go(&self.goal_room.clone()).or_else(look)
    }
}
