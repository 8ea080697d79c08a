//! The event loop: admission with overflow stacking, segment traversal with
//! queue spillback, per-lane (or shared) station service, and lane routing
//! at the decision point.
//!
//! Vehicles traverse segments in free-flow time and queue in physical
//! storage (effective lengths). A segment is strictly FIFO: its head blocks
//! followers until the downstream target has room. Lane choice is made once,
//! when the vehicle reaches the head of the approach segment; probabilistic
//! assignments are binding even if the assigned lane is congested.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::arrivals::ArrivalSchedule;
use crate::routing::{agent_select, occupancy_lookup, roulette_select, PolicyKind};
use crate::scenario::{LaneId, NetworkTopology, QueueDiscipline};

use super::rng::{RngStreams, Subsystem};
use super::{
    sample_service_time, security_check, EventKind, EventRecord, Location, QueueSeries,
    RunOptions, RunResult, StationVisit, TripRecord,
};

/// Queue-length series sample interval.
pub const SERIES_DT_S: f64 = 10.0;

/// Trailing window over which the prevailing flow rate is measured for
/// flow-specific routing (the flow-aggregation window of the source data).
pub const FLOW_WINDOW_S: f64 = 900.0;

const STORAGE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Arrive(u32),
    SegmentHead(u32),
    FinishService { station: u32, lane: u32 },
    Sample,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    seq: u64,
    action: Action,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we need earliest-first with
        // (time, sequence) as the deterministic total order.
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Where a segment head wants to move next. Decided once per vehicle and
/// binding until the move completes.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Lane { station: usize, lane: LaneId },
    Shared { station: usize },
    /// Pass `crossed` (bypass) and continue to `next_seg` (None = sink).
    Through {
        crossed: Option<usize>,
        next_seg: Option<usize>,
    },
}

#[derive(Debug)]
struct Vehicle {
    class_idx: usize,
    effective_length: f64,
    scheduled_s: f64,
    admitted_s: Option<f64>,
    exited_s: Option<f64>,
    decision_lane: Option<LaneId>,
    /// Prevailing arrival rate when the vehicle entered the network; keys
    /// flow-specific routing (stable through ramp-up and drain).
    flow_rate_at_admission: f64,
    visits: Vec<Option<StationVisit>>,
    chosen: Option<Target>,
}

#[derive(Debug, Clone, Copy)]
struct SegEntry {
    vehicle: u32,
    earliest_exit: f64,
}

#[derive(Debug)]
struct SegmentState {
    fifo: VecDeque<SegEntry>,
    used_m: f64,
}

#[derive(Debug)]
struct LaneState {
    /// Per-lane discipline: every vehicle in the lane, head in service.
    queue: VecDeque<u32>,
    used_m: f64,
    /// Bay occupant (both disciplines); stays set while a finished vehicle
    /// is blocked from leaving.
    in_service: Option<u32>,
    service_done: bool,
}

#[derive(Debug)]
struct StationState {
    lanes: Vec<LaneState>,
    shared_queue: VecDeque<u32>,
    shared_used_m: f64,
    tallies: Vec<u64>,
}

pub(super) struct Engine<'t> {
    topo: &'t NetworkTopology,
    policy: &'t PolicyKind,
    options: RunOptions,
    streams: RngStreams,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Pending>,
    vehicles: Vec<Vehicle>,
    schedule: &'t ArrivalSchedule,
    segments: Vec<SegmentState>,
    stations: Vec<StationState>,
    stack: VecDeque<u32>,
    admission_times: VecDeque<f64>,
    service_rng: ChaCha8Rng,
    routing_rng: ChaCha8Rng,
    security_rng: ChaCha8Rng,
    admitted: u64,
    exited: u64,
    series_times: Vec<f64>,
    series: Vec<Vec<Vec<f64>>>,
    stack_series: Vec<u32>,
    events: Vec<EventRecord>,
}

impl<'t> Engine<'t> {
    pub(super) fn new(
        topo: &'t NetworkTopology,
        policy: &'t PolicyKind,
        schedule: &'t ArrivalSchedule,
        streams: &RngStreams,
        options: RunOptions,
    ) -> Self {
        let vehicles = schedule
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                assert_eq!(e.vehicle_id, i as u64, "vehicle ids must be dense");
                let class_idx = topo
                    .class_index(e.class)
                    .expect("schedule class declared in scenario");
                Vehicle {
                    class_idx,
                    effective_length: topo.classes[class_idx].effective_length_m,
                    scheduled_s: e.time_s,
                    admitted_s: None,
                    exited_s: None,
                    decision_lane: None,
                    flow_rate_at_admission: 0.0,
                    visits: vec![None; topo.stations.len()],
                    chosen: None,
                }
            })
            .collect();
        let segments = topo
            .segments
            .iter()
            .map(|_| SegmentState {
                fifo: VecDeque::new(),
                used_m: 0.0,
            })
            .collect();
        let stations = topo
            .stations
            .iter()
            .map(|st| StationState {
                lanes: (0..st.lane_count)
                    .map(|_| LaneState {
                        queue: VecDeque::new(),
                        used_m: 0.0,
                        in_service: None,
                        service_done: false,
                    })
                    .collect(),
                shared_queue: VecDeque::new(),
                shared_used_m: 0.0,
                tallies: vec![0; st.lane_count as usize],
            })
            .collect();
        Engine {
            topo,
            policy,
            options,
            streams: *streams,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            vehicles,
            schedule,
            segments,
            stations,
            stack: VecDeque::new(),
            admission_times: VecDeque::new(),
            service_rng: streams.stream(Subsystem::Service),
            routing_rng: streams.stream(Subsystem::Routing),
            security_rng: streams.stream(Subsystem::Security),
            admitted: 0,
            exited: 0,
            series_times: Vec::new(),
            series: Vec::new(),
            stack_series: Vec::new(),
            events: Vec::new(),
        }
    }

    pub(super) fn run(mut self, streams: &RngStreams) -> RunResult {
        for entry in &self.schedule.entries {
            self.schedule_at(entry.time_s, Action::Arrive(entry.vehicle_id as u32));
        }
        self.schedule_at(0.0, Action::Sample);

        while let Some(pending) = self.heap.pop() {
            if !self.topo.drain && pending.time > self.topo.horizon_s {
                break;
            }
            debug_assert!(pending.time >= self.now, "time must not run backwards");
            self.now = pending.time;
            match pending.action {
                Action::Arrive(v) => self.handle_arrival(v),
                Action::SegmentHead(seg) => self.advance_segment(seg as usize),
                Action::FinishService { station, lane } => {
                    self.handle_finish_service(station as usize, lane as usize)
                }
                Action::Sample => self.handle_sample(),
            }
        }

        self.into_result(streams)
    }

    fn schedule_at(&mut self, time: f64, action: Action) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Pending { time, seq, action });
    }

    fn record(&mut self, kind: EventKind, vehicle: u32, location: Location) {
        if self.options.record_events {
            let seq = self.events.len() as u64;
            self.events.push(EventRecord {
                time_s: self.now,
                seq,
                kind,
                vehicle_id: vehicle as u64,
                location,
            });
        }
    }

    fn system_empty(&self) -> bool {
        self.stack.is_empty() && self.admitted == self.exited
    }

    // ----- arrivals, stacking, admission ---------------------------------

    fn handle_arrival(&mut self, v: u32) {
        self.record(EventKind::Arrival, v, Location::Stack);
        let length = self.vehicles[v as usize].effective_length;
        if self.stack.is_empty() && self.segment_fits(0, length) {
            self.admit(v);
        } else {
            // Admission is FIFO: arrivals queue behind earlier stacked
            // vehicles even when they would fit.
            self.stack.push_back(v);
        }
    }

    fn segment_fits(&self, seg: usize, length: f64) -> bool {
        self.segments[seg].used_m + length <= self.topo.segments[seg].storage_capacity_m + STORAGE_EPS
    }

    fn admit(&mut self, v: u32) {
        self.admitted += 1;
        self.admission_times.push_back(self.now);
        let rate = self.current_flow_rate();
        let vehicle = &mut self.vehicles[v as usize];
        vehicle.admitted_s = Some(self.now);
        vehicle.flow_rate_at_admission = rate;
        self.enter_segment(0, v);
    }

    fn admit_from_stack(&mut self) {
        while let Some(&head) = self.stack.front() {
            let length = self.vehicles[head as usize].effective_length;
            if !self.segment_fits(0, length) {
                break;
            }
            self.stack.pop_front();
            self.record(EventKind::AdmitFromStack, head, Location::Segment(0));
            self.admit(head);
        }
    }

    fn enter_segment(&mut self, seg: usize, v: u32) {
        let length = self.vehicles[v as usize].effective_length;
        let earliest_exit = self.now + self.topo.segments[seg].free_flow_time_s;
        self.segments[seg].used_m += length;
        self.segments[seg].fifo.push_back(SegEntry {
            vehicle: v,
            earliest_exit,
        });
        self.schedule_at(earliest_exit, Action::SegmentHead(seg as u32));
    }

    // ----- segment head advancement ---------------------------------------

    fn advance_segment(&mut self, seg: usize) {
        loop {
            let (v, ready) = match self.segments[seg].fifo.front() {
                Some(entry) => (entry.vehicle, entry.earliest_exit <= self.now),
                None => return,
            };
            if !ready {
                // The head's own SegmentHead event is still pending.
                return;
            }
            let Some(target) = self.target_for(v, seg) else {
                // No admissible lane has room; the driver has not committed
                // yet and re-evaluates when station storage frees.
                return;
            };
            let moved = match target {
                Target::Lane { station, lane } => self.try_join_lane(v, seg, station, lane),
                Target::Shared { station } => self.try_join_shared(v, seg, station),
                Target::Through { crossed, next_seg } => {
                    self.try_pass_through(v, seg, crossed, next_seg)
                }
            };
            if !moved {
                return;
            }
        }
    }

    /// Resolve (once) where the head vehicle goes when it leaves `seg`.
    /// `None` means the decision itself is deferred: no admissible lane has
    /// room, so nothing is cached and the head retries on wake-up.
    fn target_for(&mut self, v: u32, seg: usize) -> Option<Target> {
        if let Some(t) = self.vehicles[v as usize].chosen {
            return Some(t);
        }
        let target = self.compute_target(v, seg)?;
        self.vehicles[v as usize].chosen = Some(target);
        Some(target)
    }

    fn compute_target(&mut self, v: u32, seg: usize) -> Option<Target> {
        let n_st = self.topo.stations.len();
        if seg >= n_st {
            // Final segment of a segment-terminated chain.
            return Some(Target::Through {
                crossed: None,
                next_seg: None,
            });
        }
        let station = seg;
        let class_idx = self.vehicles[v as usize].class_idx;
        let admissible = &self.topo.admissible[station][class_idx];
        if admissible.is_empty() {
            let next = station + 1;
            return Some(Target::Through {
                crossed: Some(station),
                next_seg: (next < self.topo.segments.len()).then_some(next),
            });
        }
        if self.topo.stations[station].queue_discipline == QueueDiscipline::Shared {
            return Some(Target::Shared { station });
        }
        let lane = if station == self.topo.decision_station {
            self.decide_lane(v, station, class_idx)?
        } else {
            // Off-policy stations balance naturally: join the shortest
            // admissible queue that has room, ties to the lowest index.
            // With every lane full the driver waits uncommitted.
            let length = self.vehicles[v as usize].effective_length;
            let open = self.lanes_with_room(station, admissible, length);
            *open
                .iter()
                .min_by_key(|lane| (self.stations[station].lanes[lane.idx()].queue.len(), lane.0))?
        };
        Some(Target::Lane { station, lane })
    }

    fn lanes_with_room(&self, station: usize, admissible: &[LaneId], length: f64) -> Vec<LaneId> {
        let capacity = self.topo.stations[station].approach_capacity_m;
        admissible
            .iter()
            .copied()
            .filter(|lane| {
                self.stations[station].lanes[lane.idx()].used_m + length <= capacity + STORAGE_EPS
            })
            .collect()
    }

    /// The routing policy under test, evaluated at the decision point.
    ///
    /// Probabilistic assignments are drawn over the full wheel and are
    /// binding even when the assigned lane is congested or full (strict
    /// lane discipline). The agent commits only when some admissible lane
    /// has storage room, choosing among open lanes from live queue state.
    fn decide_lane(&mut self, v: u32, station: usize, class_idx: usize) -> Option<LaneId> {
        let admissible = &self.topo.admissible[station][class_idx];
        match self.policy {
            PolicyKind::ProbabilisticAverage(table)
            | PolicyKind::ProbabilisticFlowSpecific(table) => {
                let rate = self.vehicles[v as usize].flow_rate_at_admission;
                let shares = occupancy_lookup(table, rate);
                let u: f64 = self.routing_rng.gen();
                let lane = roulette_select(shares, u).expect("validated table");
                debug_assert!(
                    admissible.contains(&lane),
                    "probabilistic tables must cover only admissible lanes"
                );
                Some(lane)
            }
            PolicyKind::Agent(agent) => {
                let length = self.vehicles[v as usize].effective_length;
                let open = self.lanes_with_room(station, admissible, length);
                if open.is_empty() {
                    return None;
                }
                // The driver's profile is a per-vehicle trait: keyed by
                // vehicle id so deferred retries see the same driver.
                let profile = if agent.profiles.len() == 1 {
                    &agent.profiles[0].0
                } else {
                    let mut rng = self
                        .streams
                        .derive(Subsystem::Routing, &[0x70f11e, v as u64]);
                    let total: f64 = agent.profiles.iter().map(|(_, w)| w).sum();
                    let mut pick: f64 = rng.gen::<f64>() * total;
                    let mut chosen = &agent.profiles[0].0;
                    for (profile, weight) in &agent.profiles {
                        if pick < *weight {
                            chosen = profile;
                            break;
                        }
                        pick -= weight;
                    }
                    chosen
                };
                let queues: Vec<u32> = self.stations[station]
                    .lanes
                    .iter()
                    .map(|l| l.queue.len() as u32)
                    .collect();
                Some(agent_select(&queues, &open, profile))
            }
        }
    }

    /// Network admissions in the trailing flow window, as veh/h.
    fn current_flow_rate(&mut self) -> f64 {
        while let Some(&front) = self.admission_times.front() {
            if front < self.now - FLOW_WINDOW_S {
                self.admission_times.pop_front();
            } else {
                break;
            }
        }
        let window = self.now.min(FLOW_WINDOW_S);
        if window <= 0.0 {
            return 0.0;
        }
        self.admission_times.len() as f64 * 3600.0 / window
    }

    fn try_join_lane(&mut self, v: u32, seg: usize, station: usize, lane: LaneId) -> bool {
        let length = self.vehicles[v as usize].effective_length;
        let capacity = self.topo.stations[station].approach_capacity_m;
        let lane_state = &mut self.stations[station].lanes[lane.idx()];
        if lane_state.used_m + length > capacity + STORAGE_EPS {
            return false;
        }
        lane_state.queue.push_back(v);
        lane_state.used_m += length;
        self.pop_segment_head(seg, v);
        let vehicle = &mut self.vehicles[v as usize];
        vehicle.chosen = None;
        vehicle.visits[station] = Some(StationVisit {
            lane: Some(lane),
            join_s: self.now,
            begin_s: None,
            end_s: None,
            depart_s: None,
        });
        if station == self.topo.decision_station {
            vehicle.decision_lane = Some(lane);
        }
        self.record(EventKind::JoinQueue, v, Location::StationLane {
            station: station as u32,
            lane,
        });
        self.try_begin_service(station, lane.idx());
        self.on_segment_space_freed(seg);
        true
    }

    fn try_join_shared(&mut self, v: u32, seg: usize, station: usize) -> bool {
        let length = self.vehicles[v as usize].effective_length;
        let st = &self.topo.stations[station];
        let capacity = st.approach_capacity_m * st.lane_count as f64;
        if self.stations[station].shared_used_m + length > capacity + STORAGE_EPS {
            return false;
        }
        self.stations[station].shared_queue.push_back(v);
        self.stations[station].shared_used_m += length;
        self.pop_segment_head(seg, v);
        let vehicle = &mut self.vehicles[v as usize];
        vehicle.chosen = None;
        vehicle.visits[station] = Some(StationVisit {
            lane: None,
            join_s: self.now,
            begin_s: None,
            end_s: None,
            depart_s: None,
        });
        self.record(EventKind::JoinQueue, v, Location::StationLane {
            station: station as u32,
            lane: LaneId(0),
        });
        self.try_begin_shared(station);
        self.on_segment_space_freed(seg);
        true
    }

    fn try_pass_through(
        &mut self,
        v: u32,
        seg: usize,
        crossed: Option<usize>,
        next_seg: Option<usize>,
    ) -> bool {
        let length = self.vehicles[v as usize].effective_length;
        if let Some(next) = next_seg {
            if !self.segment_fits(next, length) {
                return false;
            }
        }
        self.pop_segment_head(seg, v);
        self.vehicles[v as usize].chosen = None;
        if let Some(station) = crossed {
            // Crossing without stopping still registers a passage time.
            self.vehicles[v as usize].visits[station] = Some(StationVisit {
                lane: None,
                join_s: self.now,
                begin_s: None,
                end_s: None,
                depart_s: Some(self.now),
            });
        }
        match next_seg {
            Some(next) => self.enter_segment(next, v),
            None => self.exit_network(v),
        }
        self.on_segment_space_freed(seg);
        true
    }

    fn pop_segment_head(&mut self, seg: usize, v: u32) {
        let entry = self.segments[seg].fifo.pop_front().expect("head exists");
        debug_assert_eq!(entry.vehicle, v);
        self.segments[seg].used_m -= self.vehicles[v as usize].effective_length;
        if self.segments[seg].fifo.is_empty() {
            self.segments[seg].used_m = 0.0; // zero out float residue
        }
    }

    fn exit_network(&mut self, v: u32) {
        self.vehicles[v as usize].exited_s = Some(self.now);
        self.exited += 1;
        self.record(EventKind::Exit, v, Location::Sink);
    }

    /// Space freed in `seg`: wake the stack (entry segment), the upstream
    /// station's blocked leavers, then the upstream segment's head — in
    /// that fixed order.
    fn on_segment_space_freed(&mut self, seg: usize) {
        if seg == 0 {
            self.admit_from_stack();
        } else {
            let upstream_station = seg - 1;
            self.try_release_blocked_lanes(upstream_station);
            self.advance_segment(seg - 1);
        }
    }

    // ----- station service -------------------------------------------------

    fn try_begin_service(&mut self, station: usize, lane_idx: usize) {
        let lane = &mut self.stations[station].lanes[lane_idx];
        if lane.in_service.is_some() {
            return;
        }
        let Some(&v) = lane.queue.front() else {
            return;
        };
        lane.in_service = Some(v);
        lane.service_done = false;
        self.begin_service(station, lane_idx, v);
    }

    fn try_begin_shared(&mut self, station: usize) {
        loop {
            if self.stations[station].shared_queue.is_empty() {
                return;
            }
            let Some(bay) = self.stations[station]
                .lanes
                .iter()
                .position(|l| l.in_service.is_none())
            else {
                return;
            };
            let v = self.stations[station].shared_queue.pop_front().expect("non-empty");
            let lane = &mut self.stations[station].lanes[bay];
            lane.in_service = Some(v);
            lane.service_done = false;
            if let Some(visit) = self.vehicles[v as usize].visits[station].as_mut() {
                visit.lane = Some(LaneId::from_idx(bay));
            }
            self.begin_service(station, bay, v);
        }
    }

    fn begin_service(&mut self, station: usize, lane_idx: usize, v: u32) {
        let model = &self.topo.stations[station].service;
        let duration =
            sample_service_time(model, &mut self.service_rng) + security_check(model, &mut self.security_rng);
        if let Some(visit) = self.vehicles[v as usize].visits[station].as_mut() {
            visit.begin_s = Some(self.now);
        }
        self.record(EventKind::BeginService, v, Location::StationLane {
            station: station as u32,
            lane: LaneId::from_idx(lane_idx),
        });
        self.schedule_at(self.now + duration, Action::FinishService {
            station: station as u32,
            lane: lane_idx as u32,
        });
    }

    fn handle_finish_service(&mut self, station: usize, lane_idx: usize) {
        let v = self.stations[station].lanes[lane_idx]
            .in_service
            .expect("service in progress");
        if let Some(visit) = self.vehicles[v as usize].visits[station].as_mut() {
            visit.end_s = Some(self.now);
        }
        self.stations[station].tallies[lane_idx] += 1;
        self.stations[station].lanes[lane_idx].service_done = true;
        self.record(EventKind::EndService, v, Location::StationLane {
            station: station as u32,
            lane: LaneId::from_idx(lane_idx),
        });
        // A served vehicle that cannot leave keeps blocking its bay until
        // downstream room appears (spillback through the station).
        self.try_depart_lane(station, lane_idx);
    }

    /// Move a served vehicle out of its bay if the next segment (or sink)
    /// accepts it. Returns true when the vehicle left.
    fn try_depart_lane(&mut self, station: usize, lane_idx: usize) -> bool {
        let lane = &self.stations[station].lanes[lane_idx];
        if !lane.service_done {
            return false;
        }
        let v = lane.in_service.expect("blocked leaver occupies the bay");
        let length = self.vehicles[v as usize].effective_length;
        let next = station + 1;
        let next_seg = (next < self.topo.segments.len()).then_some(next);
        if let Some(seg) = next_seg {
            if !self.segment_fits(seg, length) {
                return false;
            }
        }
        let shared = self.topo.stations[station].queue_discipline == QueueDiscipline::Shared;
        {
            let st = &mut self.stations[station];
            let lane = &mut st.lanes[lane_idx];
            lane.in_service = None;
            lane.service_done = false;
            if shared {
                st.shared_used_m -= length;
                if st.shared_queue.is_empty() && st.lanes.iter().all(|l| l.in_service.is_none()) {
                    st.shared_used_m = 0.0;
                }
            } else {
                let popped = lane.queue.pop_front();
                debug_assert_eq!(popped, Some(v));
                lane.used_m -= length;
                if lane.queue.is_empty() {
                    lane.used_m = 0.0;
                }
            }
        }
        if let Some(visit) = self.vehicles[v as usize].visits[station].as_mut() {
            visit.depart_s = Some(self.now);
        }
        match next_seg {
            Some(seg) => self.enter_segment(seg, v),
            None => self.exit_network(v),
        }
        // The freed bay serves the next queued vehicle, and the freed lane
        // storage may unblock the approach segment's head.
        if shared {
            self.try_begin_shared(station);
        } else {
            self.try_begin_service(station, lane_idx);
        }
        self.advance_segment(station);
        true
    }

    fn try_release_blocked_lanes(&mut self, station: usize) {
        for lane_idx in 0..self.stations[station].lanes.len() {
            if self.stations[station].lanes[lane_idx].service_done {
                self.try_depart_lane(station, lane_idx);
            }
        }
    }

    // ----- series sampling --------------------------------------------------

    fn handle_sample(&mut self) {
        if self.series.is_empty() {
            self.series = self
                .topo
                .stations
                .iter()
                .map(|st| {
                    let slots = if st.queue_discipline == QueueDiscipline::Shared {
                        1
                    } else {
                        st.lane_count as usize
                    };
                    vec![Vec::new(); slots]
                })
                .collect();
        }
        self.series_times.push(self.now);
        for (s, station) in self.stations.iter().enumerate() {
            if self.topo.stations[s].queue_discipline == QueueDiscipline::Shared {
                self.series[s][0].push(station.shared_used_m);
            } else {
                for (l, lane) in station.lanes.iter().enumerate() {
                    self.series[s][l].push(lane.used_m);
                }
            }
        }
        self.stack_series.push(self.stack.len() as u32);
        let next = self.now + SERIES_DT_S;
        if next <= self.topo.horizon_s || !self.system_empty() {
            self.schedule_at(next, Action::Sample);
        }
    }

    // ----- result assembly ---------------------------------------------------

    fn into_result(self, streams: &RngStreams) -> RunResult {
        let topo = self.topo;
        let trips: Vec<TripRecord> = self
            .vehicles
            .into_iter()
            .enumerate()
            .map(|(id, v)| TripRecord {
                vehicle_id: id as u64,
                class: topo.classes[v.class_idx].id,
                scheduled_s: v.scheduled_s,
                admitted_s: v.admitted_s,
                exited_s: v.exited_s,
                decision_lane: v.decision_lane,
                visits: v.visits,
            })
            .collect();
        let scheduled = trips.len() as u64;
        RunResult {
            scenario_id: topo.scenario_id.clone(),
            scenario_hash: topo.scenario_hash.clone(),
            policy_name: self.policy.name().to_string(),
            seed: streams.master_seed(),
            warmup_s: topo.warmup_s,
            horizon_s: topo.horizon_s,
            station_ids: topo.stations.iter().map(|s| s.id.clone()).collect(),
            trips,
            lane_tallies: self.stations.iter().map(|s| s.tallies.clone()).collect(),
            queue_series: QueueSeries {
                dt_s: SERIES_DT_S,
                times: self.series_times,
                per_station: self.series,
            },
            stack_series: self.stack_series,
            scheduled,
            admitted: self.admitted,
            exited: self.exited,
            stacked_at_end: self.stack.len() as u64,
            in_system_at_end: self.admitted - self.exited,
            events: self.events,
        }
    }
}
