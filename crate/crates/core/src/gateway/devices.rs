//! Act device registry with a pull-based command queue.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::GatewayError;
use crate::datastore::now_millis;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlKind {
    Boolean,
    Range { lo: i64, hi: i64 },
    Enumerated { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlValue {
    Bool(bool),
    Integer(i64),
    Text(String),
}

impl fmt::Display for ControlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlValue::Bool(b) => write!(f, "{b}"),
            ControlValue::Integer(n) => write!(f, "{n}"),
            ControlValue::Text(t) => write!(f, "{t:?}"),
        }
    }
}

impl ControlKind {
    pub fn admits(&self, value: &ControlValue) -> bool {
        match (self, value) {
            (ControlKind::Boolean, ControlValue::Bool(_)) => true,
            (ControlKind::Range { lo, hi }, ControlValue::Integer(n)) => lo <= n && n <= hi,
            (ControlKind::Enumerated { values }, ControlValue::Text(t)) => values.contains(t),
            _ => false,
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            ControlKind::Range { lo, hi } if lo > hi => Err(format!("empty range {lo}..{hi}")),
            ControlKind::Enumerated { values } if values.is_empty() => {
                Err("enumeration has no values".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSchema {
    pub name: String,
    pub kind: ControlKind,
    pub current_value: ControlValue,
}

/// Registration request: a descriptor before the node assigns its id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewDevice {
    pub name: String,
    pub controls: Vec<ControlSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    pub device_id: String,
    pub name: String,
    pub controls: Vec<ControlSchema>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandState {
    Pending,
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub command_id: String,
    pub device_id: String,
    pub control: String,
    pub value: ControlValue,
    pub issued_at: i64,
    pub state: CommandState,
}

struct Device {
    descriptor: DeviceDescriptor,
    queue: VecDeque<ControlCommand>,
}

/// In-memory registry. One lock covers both descriptors and queues, so a
/// poll drains atomically with respect to concurrent `set_control` calls.
#[derive(Default)]
pub struct DeviceRegistry {
    devices: Mutex<HashMap<String, Device>>,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, device: NewDevice) -> Result<String, GatewayError> {
        if device.name.is_empty() {
            return Err(GatewayError::SchemaViolation("device name is empty".into()));
        }
        let mut seen = HashSet::new();
        for c in &device.controls {
            if c.name.is_empty() {
                return Err(GatewayError::SchemaViolation("control name is empty".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(GatewayError::SchemaViolation(format!(
                    "duplicate control {:?}",
                    c.name
                )));
            }
            c.kind.check().map_err(GatewayError::SchemaViolation)?;
            if !c.kind.admits(&c.current_value) {
                return Err(GatewayError::ValueOutOfDomain {
                    control: c.name.clone(),
                    value: c.current_value.to_string(),
                });
            }
        }
        let device_id = Uuid::new_v4().to_string();
        let descriptor = DeviceDescriptor {
            device_id: device_id.clone(),
            name: device.name,
            controls: device.controls,
        };
        self.lock().insert(
            device_id.clone(),
            Device {
                descriptor,
                queue: VecDeque::new(),
            },
        );
        Ok(device_id)
    }

    pub fn descriptor(&self, device_id: &str) -> Result<DeviceDescriptor, GatewayError> {
        self.lock()
            .get(device_id)
            .map(|d| d.descriptor.clone())
            .ok_or_else(|| GatewayError::UnknownDevice(device_id.to_string()))
    }

    /// Queue a command; the control's current value becomes the target.
    pub fn set_control(
        &self,
        device_id: &str,
        control: &str,
        value: ControlValue,
    ) -> Result<String, GatewayError> {
        let mut devices = self.lock();
        let device = devices
            .get_mut(device_id)
            .ok_or_else(|| GatewayError::UnknownDevice(device_id.to_string()))?;
        let schema = device
            .descriptor
            .controls
            .iter_mut()
            .find(|c| c.name == control)
            .ok_or_else(|| GatewayError::UnknownControl(control.to_string()))?;
        if !schema.kind.admits(&value) {
            return Err(GatewayError::ValueOutOfDomain {
                control: control.to_string(),
                value: value.to_string(),
            });
        }
        schema.current_value = value.clone();
        let command = ControlCommand {
            command_id: Uuid::new_v4().to_string(),
            device_id: device_id.to_string(),
            control: control.to_string(),
            value,
            issued_at: now_millis(),
            state: CommandState::Pending,
        };
        let id = command.command_id.clone();
        device.queue.push_back(command);
        Ok(id)
    }

    /// Drain the device's pending commands in issue order.
    pub fn poll(&self, device_id: &str) -> Result<Vec<ControlCommand>, GatewayError> {
        let mut devices = self.lock();
        let device = devices
            .get_mut(device_id)
            .ok_or_else(|| GatewayError::UnknownDevice(device_id.to_string()))?;
        Ok(device
            .queue
            .drain(..)
            .map(|mut c| {
                c.state = CommandState::Delivered;
                c
            })
            .collect())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Device>> {
        self.devices.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn light() -> NewDevice {
        serde_json::from_str(
            r#"{"name":"light","controls":[
                {"name":"brightness","kind":{"type":"range","lo":0,"hi":100},"current_value":0},
                {"name":"on","kind":{"type":"boolean"},"current_value":false},
                {"name":"scene","kind":{"type":"enumerated","values":["day","night"]},"current_value":"day"}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn queue_drains_once() {
        let reg = DeviceRegistry::new();
        let id = reg.register(light()).unwrap();
        let cmd = reg.set_control(&id, "brightness", ControlValue::Integer(80)).unwrap();
        let polled = reg.poll(&id).unwrap();
        assert_eq!(polled.len(), 1);
        assert_eq!(polled[0].command_id, cmd);
        assert_eq!(polled[0].value, ControlValue::Integer(80));
        assert_eq!(polled[0].state, CommandState::Delivered);
        assert!(reg.poll(&id).unwrap().is_empty());
        assert_eq!(
            reg.descriptor(&id).unwrap().controls[0].current_value,
            ControlValue::Integer(80)
        );
    }

    #[test]
    fn domain_checks() {
        let reg = DeviceRegistry::new();
        let id = reg.register(light()).unwrap();
        assert!(matches!(
            reg.set_control(&id, "brightness", ControlValue::Integer(150)),
            Err(GatewayError::ValueOutOfDomain { .. })
        ));
        assert!(matches!(
            reg.set_control(&id, "on", ControlValue::Integer(1)),
            Err(GatewayError::ValueOutOfDomain { .. })
        ));
        assert!(reg.set_control(&id, "scene", ControlValue::Text("night".into())).is_ok());
        assert!(matches!(
            reg.set_control(&id, "volume", ControlValue::Integer(1)),
            Err(GatewayError::UnknownControl(_))
        ));
        assert!(matches!(reg.poll("nope"), Err(GatewayError::UnknownDevice(_))));
    }

    #[test]
    fn bad_descriptors() {
        let reg = DeviceRegistry::new();
        let mut d = light();
        d.controls.push(d.controls[0].clone());
        assert!(matches!(reg.register(d), Err(GatewayError::SchemaViolation(_))));
        let mut d = light();
        d.controls[0].current_value = ControlValue::Integer(101);
        assert!(matches!(reg.register(d), Err(GatewayError::ValueOutOfDomain { .. })));
    }
}
