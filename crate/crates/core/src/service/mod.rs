//! Experiment sessions: participants, append-only avatar versions, runs
//! and leaderboards, persisted as JSON under a root directory.

mod http;

pub use http::{router, serve};

use crate::analytics::{LeaderboardEntry, DEFAULT_MAX_LAG};
use crate::archive::{self, REPORT_FILE};
use crate::dsl;
use crate::kernel::{self, FamilyConfig, RunLength, ScenarioConfig, StrategyConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub type Id = u64;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ServiceError {
    #[error("{0}")]
    ConfigError(String),
    #[error("session {0} is closed")]
    SessionClosed(Id),
    #[error("participant {0} is not registered in this session")]
    UnknownParticipant(Id),
    #[error("participant token does not match")]
    InvalidToken,
    #[error("session {0} already has a run in progress")]
    RunInProgress(Id),
    #[error("no valid avatar for participants {0:?}")]
    NoValidAvatar(Vec<Id>),
    #[error("run {0} has not finished")]
    RunNotDone(Id),
    #[error("{0} not found")]
    NotFound(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::ConfigError(_) => "ConfigError",
            ServiceError::SessionClosed(_) => "SessionClosed",
            ServiceError::UnknownParticipant(_) => "UnknownParticipant",
            ServiceError::InvalidToken => "InvalidToken",
            ServiceError::RunInProgress(_) => "RunInProgress",
            ServiceError::NoValidAvatar(_) => "NoValidAvatar",
            ServiceError::RunNotDone(_) => "RunNotDone",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::Storage(_) => "Storage",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disclosure {
    /// Sources and per-family holdings are published with each result.
    #[default]
    Full,
    PublicOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Open,
    Running,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Queued,
    Running,
    Done,
    Failed,
}

/// Size and endowment of the family built from each participant's avatar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyTemplate {
    pub n_agents: u32,
    pub initial_cash: i64,
    pub initial_shares: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub title: String,
    /// Defaults for every run. Its families run alongside the
    /// participants' avatars.
    pub scenario: ScenarioConfig,
    pub participant_family: FamilyTemplate,
    #[serde(default)]
    pub disclosure: Disclosure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: Id,
    pub config: SessionConfig,
    pub participants: Vec<Id>,
    pub status: SessionStatus,
    pub runs: Vec<Id>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: Id,
    pub session_id: Id,
    pub name: String,
    pub token: String,
    pub versions: Vec<Id>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvatarVersion {
    pub version_id: Id,
    pub participant_id: Id,
    pub source: String,
    pub created_at: u64,
    pub valid: bool,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: Id,
    pub session_id: Id,
    /// Version used for each participant.
    pub versions: BTreeMap<Id, Id>,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaderboard: Option<Vec<LeaderboardEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewParticipant {
    pub name: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Registration {
    pub participant_id: Id,
    pub token: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub participant_id: Id,
    pub token: String,
    pub source: String,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubmissionReceipt {
    pub version_id: Id,
    pub valid: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub run_length: Option<RunLength>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionHistory {
    pub session: Session,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct State {
    next_id: Id,
    sessions: BTreeMap<Id, Session>,
    participants: BTreeMap<Id, Participant>,
    versions: BTreeMap<Id, AvatarVersion>,
    runs: BTreeMap<Id, RunRecord>,
}

impl State {
    fn fresh_id(&mut self) -> Id {
        self.next_id += 1;
        self.next_id
    }

    fn session(&self, id: Id) -> Result<&Session, ServiceError> {
        self.sessions
            .get(&id)
            .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    fn session_mut(&mut self, id: Id) -> Result<&mut Session, ServiceError> {
        self.sessions
            .get_mut(&id)
            .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    fn run(&self, id: Id) -> Result<&RunRecord, ServiceError> {
        self.runs
            .get(&id)
            .ok_or_else(|| ServiceError::NotFound(format!("run {id}")))
    }

    fn latest_valid(&self, participant: &Participant) -> Option<&AvatarVersion> {
        participant
            .versions
            .iter()
            .rev()
            .map(|v| &self.versions[v])
            .find(|v| v.valid)
    }
}

struct Inner {
    root: PathBuf,
    state: Mutex<State>,
    finished: Condvar,
}

/// Handle to the service; cheap to clone and safe to share.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

const STATE_FILE: &str = "state.json";

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn storage(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

fn family_for(name: &str, source: &str, t: &FamilyTemplate) -> FamilyConfig {
    FamilyConfig {
        name: name.to_string(),
        strategy: StrategyConfig::Avatar {
            source: source.to_string(),
        },
        n_agents: t.n_agents,
        initial_cash: t.initial_cash,
        initial_shares: t.initial_shares,
    }
}

impl Service {
    /// Opens (or creates) a store rooted at `root`. Runs left unfinished
    /// by a previous process are marked failed.
    pub fn open(root: &Path) -> Result<Service, ServiceError> {
        std::fs::create_dir_all(root.join("runs")).map_err(storage)?;
        let path = root.join(STATE_FILE);
        let mut state: State = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(storage)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => State::default(),
            Err(e) => return Err(storage(e)),
        };
        for r in state.runs.values_mut() {
            if matches!(r.status, RunStatus::Queued | RunStatus::Running) {
                r.status = RunStatus::Failed;
                r.error = Some("interrupted by service restart".into());
            }
        }
        for s in state.sessions.values_mut() {
            if s.status == SessionStatus::Running {
                s.status = SessionStatus::Open;
            }
        }
        let svc = Service {
            inner: Arc::new(Inner {
                root: root.to_path_buf(),
                state: Mutex::new(state),
                finished: Condvar::new(),
            }),
        };
        svc.save(&svc.lock())?;
        Ok(svc)
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.inner.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn save(&self, state: &State) -> Result<(), ServiceError> {
        let tmp = self.inner.root.join("state.json.tmp");
        let text = serde_json::to_string_pretty(state).map_err(storage)?;
        std::fs::write(&tmp, text).map_err(storage)?;
        std::fs::rename(&tmp, self.inner.root.join(STATE_FILE)).map_err(storage)
    }

    pub fn archive_dir(&self, run_id: Id) -> PathBuf {
        self.inner.root.join("runs").join(run_id.to_string())
    }

    pub fn create_session(&self, config: SessionConfig) -> Result<Session, ServiceError> {
        let mut probe = config.scenario.clone();
        probe.families.push(family_for(
            "participant",
            "avatar \"probe\" {}",
            &config.participant_family,
        ));
        probe
            .validate()
            .map_err(|e| ServiceError::ConfigError(e.to_string()))?;
        for (i, f) in config.scenario.families.iter().enumerate() {
            if let StrategyConfig::Avatar { source } = &f.strategy {
                dsl::parse(source).map_err(|e| {
                    ServiceError::ConfigError(format!("scenario.families[{i}].strategy: {e}"))
                })?;
            }
        }
        let mut st = self.lock();
        let session = Session {
            session_id: st.fresh_id(),
            config,
            participants: Vec::new(),
            status: SessionStatus::Open,
            runs: Vec::new(),
        };
        st.sessions.insert(session.session_id, session.clone());
        self.save(&st)?;
        Ok(session)
    }

    pub fn close_session(&self, session_id: Id) -> Result<Session, ServiceError> {
        let mut st = self.lock();
        let s = st.session_mut(session_id)?;
        s.status = SessionStatus::Closed;
        let out = s.clone();
        self.save(&st)?;
        Ok(out)
    }

    pub fn add_participant(
        &self,
        session_id: Id,
        p: NewParticipant,
    ) -> Result<Registration, ServiceError> {
        let mut st = self.lock();
        if st.session(session_id)?.status == SessionStatus::Closed {
            return Err(ServiceError::SessionClosed(session_id));
        }
        let id = st.fresh_id();
        let token = format!(
            "{:016x}{:016x}",
            rand::random::<u64>(),
            rand::random::<u64>()
        );
        st.participants.insert(
            id,
            Participant {
                participant_id: id,
                session_id,
                name: p.name,
                token: token.clone(),
                versions: Vec::new(),
            },
        );
        st.session_mut(session_id)?.participants.push(id);
        self.save(&st)?;
        Ok(Registration {
            participant_id: id,
            token,
        })
    }

    /// Stores a new version whether or not it parses; only valid versions
    /// are eligible for runs.
    pub fn submit_avatar(
        &self,
        session_id: Id,
        sub: Submission,
    ) -> Result<SubmissionReceipt, ServiceError> {
        let mut st = self.lock();
        if st.session(session_id)?.status == SessionStatus::Closed {
            return Err(ServiceError::SessionClosed(session_id));
        }
        let p = st
            .participants
            .get(&sub.participant_id)
            .filter(|p| p.session_id == session_id)
            .ok_or(ServiceError::UnknownParticipant(sub.participant_id))?;
        if p.token != sub.token {
            return Err(ServiceError::InvalidToken);
        }
        let diagnostics = match dsl::parse(&sub.source) {
            Ok(_) => Vec::new(),
            Err(e) => vec![Diagnostic {
                line: e.line,
                column: e.column,
                message: e.to_string(),
            }],
        };
        let id = st.fresh_id();
        let version = AvatarVersion {
            version_id: id,
            participant_id: sub.participant_id,
            source: sub.source,
            created_at: now_secs(),
            valid: diagnostics.is_empty(),
            diagnostics: diagnostics.clone(),
            note: sub.note,
        };
        st.versions.insert(id, version.clone());
        st.participants
            .get_mut(&sub.participant_id)
            .expect("checked above")
            .versions
            .push(id);
        self.save(&st)?;
        Ok(SubmissionReceipt {
            version_id: id,
            valid: version.valid,
            diagnostics,
        })
    }

    /// Queues a run and executes it on a worker thread.
    pub fn start_run(
        &self,
        session_id: Id,
        overrides: RunOverrides,
    ) -> Result<RunRecord, ServiceError> {
        let mut st = self.lock();
        let session = st.session(session_id)?.clone();
        match session.status {
            SessionStatus::Closed => return Err(ServiceError::SessionClosed(session_id)),
            SessionStatus::Running => return Err(ServiceError::RunInProgress(session_id)),
            SessionStatus::Open => {}
        }
        let mut scenario = session.config.scenario.clone();
        let mut versions = BTreeMap::new();
        let mut missing = Vec::new();
        for pid in &session.participants {
            let p = &st.participants[pid];
            match st.latest_valid(p) {
                Some(v) => {
                    versions.insert(*pid, v.version_id);
                    scenario.families.push(family_for(
                        &p.name,
                        &v.source,
                        &session.config.participant_family,
                    ));
                }
                None => missing.push(*pid),
            }
        }
        if !missing.is_empty() {
            return Err(ServiceError::NoValidAvatar(missing));
        }
        let seed = overrides.seed.unwrap_or_else(rand::random);
        scenario.master_seed = seed;
        if let Some(len) = overrides.run_length {
            scenario.run_length = len;
        }
        scenario
            .validate()
            .map_err(|e| ServiceError::ConfigError(e.to_string()))?;
        let run_id = st.fresh_id();
        let record = RunRecord {
            run_id,
            session_id,
            versions,
            scenario: scenario.clone(),
            seed,
            status: RunStatus::Queued,
            archive: None,
            leaderboard: None,
            error: None,
        };
        st.runs.insert(run_id, record.clone());
        let s = st.session_mut(session_id)?;
        s.status = SessionStatus::Running;
        s.runs.push(run_id);
        self.save(&st)?;
        drop(st);
        let svc = self.clone();
        std::thread::spawn(move || svc.execute(run_id, scenario));
        Ok(record)
    }

    fn execute(&self, run_id: Id, scenario: ScenarioConfig) {
        self.update_run(run_id, |r| r.status = RunStatus::Running);
        let dir = self.archive_dir(run_id);
        let outcome = kernel::run(&scenario)
            .map_err(|e| e.to_string())
            .and_then(|result| {
                archive::write_archive(&dir, &result, DEFAULT_MAX_LAG).map_err(|e| e.to_string())
            });
        let archive = dir.to_string_lossy().into_owned();
        self.update_run(run_id, move |r| match outcome {
            Ok(report) => {
                r.status = RunStatus::Done;
                r.archive = Some(archive);
                r.leaderboard = Some(report.leaderboard);
            }
            Err(e) => {
                r.status = RunStatus::Failed;
                r.error = Some(e);
            }
        });
        self.inner.finished.notify_all();
    }

    fn update_run(&self, run_id: Id, f: impl FnOnce(&mut RunRecord)) {
        let mut st = self.lock();
        let Some(r) = st.runs.get_mut(&run_id) else {
            return;
        };
        f(r);
        let terminal = matches!(r.status, RunStatus::Done | RunStatus::Failed);
        let session_id = r.session_id;
        if terminal {
            if let Some(s) = st.sessions.get_mut(&session_id) {
                if s.status == SessionStatus::Running {
                    s.status = SessionStatus::Open;
                }
            }
        }
        if let Err(e) = self.save(&st) {
            log::error!("saving state after run {run_id}: {e}");
        }
    }

    /// Blocks until the run reaches `Done` or `Failed`.
    pub fn wait(&self, run_id: Id) -> Result<RunRecord, ServiceError> {
        let mut st = self.lock();
        loop {
            let r = st.run(run_id)?;
            if matches!(r.status, RunStatus::Done | RunStatus::Failed) {
                return Ok(r.clone());
            }
            st = self
                .inner
                .finished
                .wait(st)
                .unwrap_or_else(|e| e.into_inner());
        }
    }

    fn disclosure_for(&self, st: &State, run: &RunRecord) -> Disclosure {
        st.sessions
            .get(&run.session_id)
            .map(|s| s.config.disclosure)
            .unwrap_or_default()
    }

    fn redact(run: &mut RunRecord) {
        for f in &mut run.scenario.families {
            if let StrategyConfig::Avatar { source } = &mut f.strategy {
                source.clear();
            }
        }
    }

    pub fn run_record(&self, run_id: Id) -> Result<RunRecord, ServiceError> {
        let st = self.lock();
        let mut r = st.run(run_id)?.clone();
        if self.disclosure_for(&st, &r) == Disclosure::PublicOnly {
            Self::redact(&mut r);
        }
        Ok(r)
    }

    fn done(&self, run_id: Id) -> Result<(RunRecord, Disclosure), ServiceError> {
        let st = self.lock();
        let r = st.run(run_id)?;
        if r.status != RunStatus::Done {
            return Err(ServiceError::RunNotDone(run_id));
        }
        Ok((r.clone(), self.disclosure_for(&st, r)))
    }

    /// The stored `report.json`, with private panels withheld when the
    /// session publishes public information only.
    pub fn report_json(&self, run_id: Id) -> Result<String, ServiceError> {
        let (_, disclosure) = self.done(run_id)?;
        let text =
            std::fs::read_to_string(self.archive_dir(run_id).join(REPORT_FILE)).map_err(storage)?;
        match disclosure {
            Disclosure::Full => Ok(text),
            Disclosure::PublicOnly => {
                let report: crate::analytics::StylizedFactsReport =
                    serde_json::from_str(&text).map_err(storage)?;
                Ok(report.public_only().to_json())
            }
        }
    }

    pub fn leaderboard(&self, run_id: Id) -> Result<Vec<LeaderboardEntry>, ServiceError> {
        let (r, _) = self.done(run_id)?;
        Ok(r.leaderboard.unwrap_or_default())
    }

    pub fn history(&self, session_id: Id) -> Result<SessionHistory, ServiceError> {
        let st = self.lock();
        let session = st.session(session_id)?.clone();
        let public = session.config.disclosure == Disclosure::PublicOnly;
        let runs = session
            .runs
            .iter()
            .map(|id| {
                let mut r = st.runs[id].clone();
                if public {
                    Self::redact(&mut r);
                }
                r
            })
            .collect();
        Ok(SessionHistory { session, runs })
    }

    pub fn versions(&self, participant_id: Id) -> Result<Vec<AvatarVersion>, ServiceError> {
        let st = self.lock();
        let p = st
            .participants
            .get(&participant_id)
            .ok_or(ServiceError::UnknownParticipant(participant_id))?;
        Ok(p.versions.iter().map(|v| st.versions[v].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn config() -> SessionConfig {
        serde_json::from_str(
            r#"{
            "title": "t",
            "scenario": {
                "families": [{"name": "noise", "strategy": {"archetype": {"kind": "random"}},
                              "n_agents": 10, "initial_cash": 100000, "initial_shares": 100}],
                "initial_reference_price": 100,
                "run_length": {"transactions": 200}
            },
            "participant_family": {"n_agents": 5, "initial_cash": 100000, "initial_shares": 100}
        }"#,
        )
        .unwrap()
    }

    const IDLE: &str = "avatar \"idle\" {}";

    fn submit(svc: &Service, s: Id, reg: &Registration, source: &str) -> SubmissionReceipt {
        svc.submit_avatar(
            s,
            Submission {
                participant_id: reg.participant_id,
                token: reg.token.clone(),
                source: source.into(),
                note: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn lifecycle() {
        let dir = tempfile::tempdir().unwrap();
        let svc = Service::open(dir.path()).unwrap();
        let s = svc.create_session(config()).unwrap();
        assert_eq!(s.status, SessionStatus::Open);
        let a = svc
            .add_participant(s.session_id, NewParticipant { name: "a".into() })
            .unwrap();
        let bad = submit(&svc, s.session_id, &a, "avatar \"x\" { on wake { while } }");
        assert!(!bad.valid && bad.diagnostics[0].line == 1);
        let err = svc
            .start_run(s.session_id, RunOverrides::default())
            .unwrap_err();
        assert_eq!(err, ServiceError::NoValidAvatar(vec![a.participant_id]));
        assert!(submit(&svc, s.session_id, &a, IDLE).valid);
        assert_eq!(svc.versions(a.participant_id).unwrap().len(), 2);
        let r = svc
            .start_run(
                s.session_id,
                RunOverrides {
                    seed: Some(3),
                    run_length: None,
                },
            )
            .unwrap();
        let done = svc.wait(r.run_id).unwrap();
        assert_eq!(done.status, RunStatus::Done, "{:?}", done.error);
        assert_eq!(done.leaderboard.unwrap().len(), 2);
        assert!(svc.report_json(r.run_id).unwrap().contains("\"acf_raw\""));
        assert_eq!(svc.history(s.session_id).unwrap().runs.len(), 1);
    }

    #[test]
    fn closed_and_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let svc = Service::open(dir.path()).unwrap();
        let s = svc.create_session(config()).unwrap();
        let a = svc
            .add_participant(s.session_id, NewParticipant { name: "a".into() })
            .unwrap();
        let wrong = Submission {
            participant_id: 999,
            token: a.token.clone(),
            source: IDLE.into(),
            note: None,
        };
        assert_eq!(
            svc.submit_avatar(s.session_id, wrong).unwrap_err(),
            ServiceError::UnknownParticipant(999)
        );
        svc.close_session(s.session_id).unwrap();
        let sub = Submission {
            participant_id: a.participant_id,
            token: a.token,
            source: IDLE.into(),
            note: None,
        };
        assert_eq!(
            svc.submit_avatar(s.session_id, sub).unwrap_err(),
            ServiceError::SessionClosed(s.session_id)
        );
    }

    #[test]
    fn invalid_defaults_rejected_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let svc = Service::open(dir.path()).unwrap();
        let mut c = config();
        c.scenario.families[0].n_agents = 0;
        match svc.create_session(c).unwrap_err() {
            ServiceError::ConfigError(m) => assert!(m.contains("families[0].n_agents"), "{m}"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn state_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let svc = Service::open(dir.path()).unwrap();
        let s = svc.create_session(config()).unwrap();
        let a = svc
            .add_participant(s.session_id, NewParticipant { name: "a".into() })
            .unwrap();
        submit(&svc, s.session_id, &a, IDLE);
        drop(svc);
        let again = Service::open(dir.path()).unwrap();
        assert_eq!(again.versions(a.participant_id).unwrap().len(), 1);
        assert_eq!(
            again.history(s.session_id).unwrap().session.participants,
            vec![a.participant_id]
        );
    }
}
