use std::future::Future;
use std::io::ErrorKind;
use std::net::TcpListener;
use std::sync::Arc;

use super::config::{NodeConfig, Role, Transport};
use super::fetch::HttpFetcher;
use super::private::PrivateNode;
use super::public::PublicNode;
use super::state;
use super::NodeError;
use crate::callosum::{Channel, ChannelMode, Link, Side, TcpLink};
use crate::gateway::{current_code, router, Gateway};
use crate::vdp::VdpFetcher;

/// Warnings worth showing before a node starts.
pub fn preflight(config: &NodeConfig) -> Vec<String> {
    let mut warnings = Vec::new();
    let mode = state::effective_mode(&config.data_dir, config.channel.mode);
    if config.role == Role::Public
        && mode == ChannelMode::Diode
        && state::read_announced_key(&config.data_dir).is_none()
    {
        warnings.push(
            "channel is in diode mode and no private-node key has been announced: sealed ingestion \
             will queue until provisioning (start in duplex, run `lifeserver provision`, then `lifeserver lock`)"
                .to_string(),
        );
    }
    if config.channel.fec.enabled && config.channel.error_model.is_lossless() {
        warnings.push("FEC is enabled on a lossless channel".to_string());
    }
    warnings
}

/// One or two nodes running in this process.
pub struct Deployment {
    pub private: Option<PrivateNode>,
    pub public: Option<PublicNode>,
    channel: Option<Channel>,
}

impl Deployment {
    /// Start the given nodes (private first). Two in-process nodes share one
    /// simulated channel configured from the public node's settings.
    pub fn start(
        configs: Vec<NodeConfig>,
        fetcher: Arc<dyn VdpFetcher + Send + Sync>,
    ) -> Result<Deployment, NodeError> {
        let mut public_cfg = None;
        let mut private_cfg = None;
        for c in configs {
            let slot = match c.role {
                Role::Public => &mut public_cfg,
                Role::Private => &mut private_cfg,
            };
            if slot.is_some() {
                return Err(NodeError::Usage(format!("more than one {} node given", c.role)));
            }
            *slot = Some(c);
        }
        if let (Some(p), Some(q)) = (&public_cfg, &private_cfg) {
            if p.data_dir == q.data_dir {
                return Err(NodeError::Usage("both nodes use the same data_dir".into()));
            }
        }

        let shared = match (&public_cfg, &private_cfg) {
            (Some(p), Some(q))
                if p.channel.transport == Transport::InProcess && q.channel.transport == Transport::InProcess =>
            {
                if p.channel.fec != q.channel.fec {
                    return Err(NodeError::Usage("both nodes must use the same FEC settings".into()));
                }
                let mode = state::effective_mode(&p.data_dir, p.channel.mode);
                Some(Channel::with_model(mode, p.channel.error_model))
            }
            _ => None,
        };

        let link_for = |config: &NodeConfig, side: Side| -> Result<Arc<dyn Link>, NodeError> {
            let mode = state::effective_mode(&config.data_dir, config.channel.mode);
            match (config.channel.transport, &shared) {
                (Transport::InProcess, Some(ch)) => Ok(Arc::new(ch.endpoint(side))),
                (Transport::InProcess, None) => {
                    log::warn!("{} node runs without an in-process peer; its channel goes nowhere", config.role);
                    Ok(Arc::new(Channel::with_model(mode, config.channel.error_model).endpoint(side)))
                }
                (Transport::TcpSim, _) => {
                    let addr = config.channel.address.as_deref().unwrap_or_default();
                    let model = config.channel.error_model;
                    match side {
                        Side::Private => TcpLink::listen(addr, side, mode, model)
                            .map(|l| Arc::new(l) as Arc<dyn Link>)
                            .map_err(|e| match e.kind() {
                                ErrorKind::AddrInUse => NodeError::PortInUse(addr.to_string()),
                                _ => NodeError::Io {
                                    path: addr.to_string(),
                                    message: e.to_string(),
                                },
                            }),
                        Side::Public => Ok(Arc::new(TcpLink::connect(addr, side, mode, model))),
                    }
                }
            }
        };

        let private = match &private_cfg {
            Some(c) => Some(PrivateNode::start(c.clone(), link_for(c, Side::Private)?)?),
            None => None,
        };
        let public = match &public_cfg {
            Some(c) => Some(PublicNode::start(c.clone(), link_for(c, Side::Public)?, fetcher)?),
            None => None,
        };
        Ok(Deployment {
            private,
            public,
            channel: shared,
        })
    }

    /// The shared in-process channel, when both nodes run here.
    pub fn channel(&self) -> Option<&Channel> {
        self.channel.as_ref()
    }

    pub fn shutdown(self) {
        // Public first so nothing new is forwarded to a stopping private node.
        if let Some(p) = self.public {
            p.shutdown();
        }
        if let Some(p) = self.private {
            p.shutdown();
        }
    }
}

/// Bind the HTTP listener, mapping "address in use" to PortInUse.
pub fn bind_http(address: &str) -> Result<TcpListener, NodeError> {
    let listener = TcpListener::bind(address).map_err(|e| match e.kind() {
        ErrorKind::AddrInUse => NodeError::PortInUse(address.to_string()),
        _ => NodeError::Io {
            path: address.to_string(),
            message: e.to_string(),
        },
    })?;
    listener
        .set_nonblocking(true)
        .map_err(|e| NodeError::io(std::path::Path::new(address), e))?;
    Ok(listener)
}

/// Serve the gateway's HTTP API until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::from_std(listener)?;
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn termination() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

/// Run the configured nodes until SIGINT/SIGTERM.
pub fn run(configs: Vec<NodeConfig>) -> Result<(), NodeError> {
    for c in &configs {
        for w in preflight(c) {
            log::warn!("{} node: {w}", c.role);
            eprintln!("warning: {} node: {w}", c.role);
        }
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| NodeError::Io {
            path: "tokio runtime".into(),
            message: e.to_string(),
        })?;

    let listener = match configs.iter().find(|c| c.role == Role::Public) {
        Some(c) => Some(bind_http(c.listen_address.as_deref().unwrap_or_default())?),
        None => None,
    };
    let fetcher: Arc<dyn VdpFetcher + Send + Sync> = Arc::new(HttpFetcher::default());
    let deployment = Deployment::start(configs, fetcher)?;

    runtime.block_on(async {
        match (&deployment.public, listener) {
            (Some(node), Some(listener)) => {
                let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or_default();
                let code = current_code(
                    &node.config().data_dir,
                    node.config().pairing_code.as_deref().unwrap_or_default(),
                );
                println!("public node listening on http://{addr}");
                println!("pairing code: {code}");
                serve(listener, node.gateway(), termination())
                    .await
                    .map_err(|e| NodeError::Io {
                        path: addr,
                        message: e.to_string(),
                    })
            }
            _ => {
                println!("private node running");
                termination().await;
                Ok(())
            }
        }
    })?;
    log::info!("shutting down");
    deployment.shutdown();
    Ok(())
}
