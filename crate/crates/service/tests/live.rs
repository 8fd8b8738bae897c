use std::time::Duration;

use meshsplat_client::protocol::{
    CameraParams, FrameFormat, RenderRequest, ServerMessage, StateMessage,
};
use meshsplat_client::{Client, ClientError, Incoming, Session};
use meshsplat_core::avatar::Avatar;
use meshsplat_core::gaussians::{Camera, Orbit};
use meshsplat_core::image::Image;
use meshsplat_core::math::Vec3;
use meshsplat_core::offsets::{NetworkConfig, OffsetMode};
use meshsplat_core::render::RenderSettings;
use meshsplat_core::synthetic::{SyntheticAvatar, SyntheticAvatarConfig};
use meshsplat_core::train::TrainConfig;
use meshsplat_service::{Engine, Service};
use tokio::time::timeout;

const SIZE: u32 = 40;

fn avatar() -> Avatar {
    let mesh = SyntheticAvatar::build(&SyntheticAvatarConfig {
        subdivisions: 2,
        ..Default::default()
    })
    .mesh;
    let cfg = TrainConfig {
        uv_resolution: 24,
        sh_degree: 1,
        offset_mode: OffsetMode::Dynamic,
        network: NetworkConfig {
            depth: 3,
            width: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut a = Avatar::build(mesh, &cfg).unwrap();
    for (i, v) in a.field.sh.iter_mut().enumerate() {
        *v = ((i * 37 % 11) as f64 - 5.0) * 0.1;
    }
    a
}

async fn start() -> Client {
    let service = Service::start(Engine::new(avatar(), SIZE, SIZE));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(service.serve(listener));
    Client::new(format!("http://{addr}"))
}

fn offline(state: &StateMessage) -> Image {
    let c = &state.camera;
    let orbit = Orbit {
        radius: c.radius,
        elevation_deg: c.elevation_deg,
        azimuth_deg: c.azimuth_deg,
        fov_deg: c.fov_deg,
    };
    let cam = Camera::orbit(Vec3::zeros(), &orbit, SIZE, SIZE).unwrap();
    let settings = RenderSettings {
        background: state.background,
    };
    avatar().render(&state.psi, &cam, &settings).unwrap().0.frame.image
}

fn state(azimuth: f64) -> StateMessage {
    StateMessage {
        psi: vec![0.4, -0.3, 0.2],
        camera: CameraParams {
            azimuth_deg: azimuth,
            ..Default::default()
        },
        background: [1.0, 1.0, 1.0],
    }
}

async fn next(session: &mut Session) -> Incoming {
    timeout(Duration::from_secs(30), session.next())
        .await
        .expect("service answered in time")
        .expect("session open")
        .expect("valid message")
}

#[tokio::test]
async fn health_and_layout() {
    let client = start().await;
    let h = client.health().await.unwrap();
    assert_eq!(h.status, "ok");
    let layout = client.layout().await.unwrap();
    assert_eq!(layout.psi_dim, 3);
    assert_eq!(layout.blocks[0].name, "expression");
    assert_eq!((layout.blocks[0].offset, layout.blocks[0].size), (0, 3));
    assert_eq!(layout.gaussians, h.gaussians);
    assert_eq!(layout.gaussians, avatar().len());
    assert_eq!((layout.width, layout.height), (SIZE, SIZE));
    assert_eq!(layout.offset_mode, "dynamic");
}

#[tokio::test]
async fn http_render_matches_offline_png() {
    let client = start().await;
    let s = state(25.0);
    let req = RenderRequest {
        psi: s.psi.clone(),
        camera: s.camera,
        background: s.background,
        width: None,
        height: None,
    };
    let png = client.render(&req).await.unwrap();
    assert_eq!(png, offline(&s).encode_png().unwrap());
}

#[tokio::test]
async fn http_render_reports_expected_length() {
    let client = start().await;
    let req = RenderRequest {
        psi: vec![0.0; 5],
        camera: CameraParams::default(),
        background: [1.0; 3],
        width: None,
        height: None,
    };
    match client.render(&req).await {
        Err(ClientError::Service { status, message }) => {
            assert_eq!(status, 400);
            assert!(message.contains("expects 3"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn streamed_frames_match_offline_render() {
    let client = start().await;
    for format in [FrameFormat::Png, FrameFormat::Raw] {
        let mut session = client.connect(format).await.unwrap();
        let s = state(-40.0);
        session.send_state(&s).await.unwrap();
        let Incoming::Frame(f) = next(&mut session).await else {
            panic!("expected a frame first");
        };
        assert_eq!(f.format, format);
        assert_eq!((f.width, f.height), (SIZE, SIZE));
        let expected = offline(&s);
        match format {
            FrameFormat::Png => assert_eq!(f.data, expected.encode_png().unwrap()),
            FrameFormat::Raw => assert_eq!(f.data, expected.to_srgb8()),
        }
        let Incoming::Message(ServerMessage::Stats(stats)) = next(&mut session).await else {
            panic!("expected stats after the frame");
        };
        assert_eq!(stats.seq, f.seq);
        assert_eq!(stats.gaussians, avatar().len());
        assert!(stats.last_ms > 0.0 && stats.fps > 0.0);
        session.close().await.unwrap();
    }
}

#[tokio::test]
async fn bad_messages_get_errors_and_the_session_survives() {
    let client = start().await;
    let mut session = client.connect(FrameFormat::Png).await.unwrap();

    session.send_text("{not json").await.unwrap();
    let Incoming::Message(ServerMessage::Error(e)) = next(&mut session).await else {
        panic!("expected an error reply");
    };
    assert!(e.message.starts_with("malformed message"), "{}", e.message);
    assert_eq!(e.expected_psi_len, None);

    session.send_text(r#"{"type":"state","psi":[1,2]}"#).await.unwrap();
    let Incoming::Message(ServerMessage::Error(e)) = next(&mut session).await else {
        panic!("expected an error reply");
    };
    assert_eq!(e.expected_psi_len, Some(3));

    session.send_text(r#"{"type":"state","psi":[0,0,0],"camera":{"radius":-1,"elevation_deg":0,"azimuth_deg":0,"fov_deg":40}}"#).await.unwrap();
    assert!(matches!(next(&mut session).await, Incoming::Message(ServerMessage::Error(_))));

    session.send_state(&state(0.0)).await.unwrap();
    assert!(matches!(next(&mut session).await, Incoming::Frame(_)));
}

#[tokio::test]
async fn newest_state_wins() {
    let client = start().await;
    let mut session = client.connect(FrameFormat::Raw).await.unwrap();
    let states: Vec<StateMessage> = (0..25).map(|k| state(-60.0 + 5.0 * k as f64)).collect();
    for s in &states {
        session.send_state(s).await.unwrap();
    }
    let last = offline(states.last().unwrap()).to_srgb8();
    let mut frames = 0;
    let mut prev_seq = 0;
    loop {
        match next(&mut session).await {
            Incoming::Frame(f) => {
                frames += 1;
                assert!(f.seq > prev_seq);
                prev_seq = f.seq;
                if f.data == last {
                    break;
                }
            }
            Incoming::Message(ServerMessage::Stats(_)) => {}
            Incoming::Message(ServerMessage::Error(e)) => panic!("{}", e.message),
        }
    }
    assert!(frames <= states.len());
}

#[tokio::test]
async fn every_session_sees_frames() {
    let client = start().await;
    let mut a = client.connect(FrameFormat::Png).await.unwrap();
    let mut b = client.connect(FrameFormat::Raw).await.unwrap();
    a.send_state(&state(10.0)).await.unwrap();
    let Incoming::Frame(fa) = next(&mut a).await else { panic!() };
    let Incoming::Frame(fb) = next(&mut b).await else { panic!() };
    assert_eq!(fa.seq, fb.seq);
}
