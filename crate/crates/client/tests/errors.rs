use meshsplat_client::protocol::{FrameFormat, RenderRequest};
use meshsplat_client::{Client, ClientError};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpListener;

/// Answers one HTTP request with `status` and a JSON `body`.
async fn one_shot(status: &'static str, body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        let (mut sock, _) = listener.accept().await.unwrap();
        let mut buf = vec![0u8; 4096];
        let _ = sock.read(&mut buf).await.unwrap();
        let reply = format!(
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        sock.write_all(reply.as_bytes()).await.unwrap();
    });
    format!("http://{addr}")
}

#[tokio::test]
async fn service_error_replies_surface_their_message() {
    let url = one_shot("400 Bad Request", r#"{"message":"psi has 2 values, expects 3","expected_psi_len":3}"#).await;
    let req = RenderRequest {
        psi: vec![0.0; 2],
        camera: Default::default(),
        background: [1.0; 3],
        width: None,
        height: None,
    };
    match Client::new(url).render(&req).await {
        Err(ClientError::Service { status, message }) => {
            assert_eq!(status, 400);
            assert_eq!(message, "psi has 2 values, expects 3");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn plain_text_errors_are_kept_verbatim() {
    let url = one_shot("500 Internal Server Error", "boom").await;
    match Client::new(url).health().await {
        Err(ClientError::Service { status: 500, message }) => assert_eq!(message, "boom"),
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let client = Client::new(url);
    assert!(client.base().ends_with(char::is_numeric));
    assert!(matches!(client.layout().await, Err(ClientError::Http(_))));
    assert!(matches!(client.connect(FrameFormat::Raw).await, Err(ClientError::WebSocket(_))));
}
